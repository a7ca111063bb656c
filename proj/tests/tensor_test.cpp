#include <cmath>
#include <cstdio>
#include <filesystem>

#include <gtest/gtest.h>

#include "gtrans/adam.hpp"
#include "gtrans/checkpoint.hpp"
#include "gtrans/tensor.hpp"
#include "oracles.hpp"

using namespace gtrans;

TEST(Matmul, IdentityCase) {
    Tensor i2 = Tensor::constant(2, 2, {1, 0, 0, 1});
    Tensor b = Tensor::constant(2, 2, {3, 4, 5, 6});
    Tensor c = matmul(i2, b);
    EXPECT_EQ(c.value(), (std::vector<double>{3, 4, 5, 6}));
}

TEST(Matmul, ScalarChainRule) {
    Tape tape;
    TapeScope scope(tape);
    Tensor a = Tensor::parameter(1, 1, "a", {2});
    Tensor b = Tensor::parameter(1, 1, "b", {3});
    Tensor c = matmul(a, b);
    EXPECT_DOUBLE_EQ(c.scalar_value(), 6.0);
    backward(c);
    EXPECT_DOUBLE_EQ(a.grad()[0], 3.0);
    EXPECT_DOUBLE_EQ(b.grad()[0], 2.0);
}

TEST(Matmul, GradientMatchesFiniteDifferences) {
    Rng rng(7);
    Tensor a = oracle::random_param(3, 4, "a", rng);
    Tensor b = oracle::random_param(4, 2, "b", rng);
    auto res = oracle::fd_check({a, b}, [&] { return sum_all(matmul(a, b)); }, 1e-5, 1e-6);
    EXPECT_TRUE(res.ok) << "max rel " << res.max_rel << " at " << res.worst;
}

TEST(Matmul, ShapeErrorNamesBothShapes) {
    Tensor a = Tensor::zeros(3, 4);
    Tensor b = Tensor::zeros(5, 2);
    try {
        matmul(a, b);
        FAIL() << "expected shape error";
    } catch (const std::invalid_argument& e) {
        EXPECT_NE(std::string(e.what()).find("3x4"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("5x2"), std::string::npos);
    }
}

TEST(Elementwise, ReluDefinition) {
    Tape tape;
    TapeScope scope(tape);
    Tensor x = Tensor::parameter(1, 2, "x", {-2, 3});
    Tensor y = relu(x);
    EXPECT_DOUBLE_EQ(y.value()[0], 0.0);
    EXPECT_DOUBLE_EQ(y.value()[1], 3.0);
    backward(sum_all(y));
    EXPECT_DOUBLE_EQ(x.grad()[0], 0.0);
    EXPECT_DOUBLE_EQ(x.grad()[1], 1.0);
}

TEST(Elementwise, RowSoftmaxSymmetry) {
    Tensor y = row_softmax(Tensor::zeros(1, 3));
    for (double v : y.value()) EXPECT_DOUBLE_EQ(v, 1.0 / 3.0);
}

TEST(Elementwise, RowSoftmaxRowsSumToOne) {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor x = oracle::random_constant(5, 7, rng, -10.0, 10.0);
        Tensor y = row_softmax(x);
        for (std::size_t i = 0; i < 5; ++i) {
            double sum = 0.0;
            for (std::size_t j = 0; j < 7; ++j) {
                const double v = y(i, j);
                EXPECT_GT(v, 0.0);
                EXPECT_LT(v, 1.0);
                sum += v;
            }
            EXPECT_NEAR(sum, 1.0, 1e-12);
        }
    }
}

TEST(Elementwise, FrobeniusGradientIsTwoX) {
    Rng rng(13);
    Tensor x = oracle::random_param(4, 4, "x", rng);
    {
        Tape tape;
        TapeScope scope(tape);
        backward(frobenius_sq(x));
    }
    for (std::size_t i = 0; i < x.size(); ++i)
        EXPECT_NEAR(x.grad()[i], 2.0 * x.value()[i], 1e-12);
    zero_grads({x});
    auto res = oracle::fd_check({x}, [&] { return frobenius_sq(x); }, 1e-5, 1e-6);
    EXPECT_TRUE(res.ok) << res.max_rel;
}

TEST(Elementwise, ConcatAxisOutOfRange) {
    Tensor a = Tensor::zeros(2, 2);
    EXPECT_THROW(concat(a, a, 2), std::invalid_argument);
    EXPECT_THROW(add(Tensor::zeros(2, 2), Tensor::zeros(2, 3)), std::invalid_argument);
}

// Every differentiable op against central finite differences on random
// inputs, 20 trials each.
TEST(Gradients, AllOpsMatchFiniteDifferences) {
    Rng rng(17);
    using Fn = std::function<Tensor(const Tensor&, const Tensor&)>;
    struct Case {
        const char* name;
        std::size_t ar, ac, br, bc;
        Fn build;
    };
    const std::vector<Case> cases = {
        {"matmul", 3, 4, 4, 2, [](const Tensor& a, const Tensor& b) { return matmul(a, b); }},
        {"add", 3, 3, 3, 3, [](const Tensor& a, const Tensor& b) { return add(a, b); }},
        {"add_scalar", 3, 3, 1, 1, [](const Tensor& a, const Tensor& b) { return add(a, b); }},
        {"sub", 3, 3, 3, 3, [](const Tensor& a, const Tensor& b) { return sub(a, b); }},
        {"mul", 3, 3, 3, 3, [](const Tensor& a, const Tensor& b) { return mul(a, b); }},
        {"mul_scalar_b", 3, 3, 1, 1, [](const Tensor& a, const Tensor& b) { return mul(a, b); }},
        {"relu", 3, 3, 3, 3,
         [](const Tensor& a, const Tensor& b) { return mul(relu(a), b); }},
        {"sigmoid", 3, 3, 3, 3,
         [](const Tensor& a, const Tensor& b) { return mul(sigmoid(a), b); }},
        {"softplus", 3, 3, 3, 3,
         [](const Tensor& a, const Tensor& b) { return mul(softplus(a), b); }},
        {"concat_rows", 2, 3, 4, 3,
         [](const Tensor& a, const Tensor& b) { return concat(a, b, 0); }},
        {"concat_cols", 3, 2, 3, 4,
         [](const Tensor& a, const Tensor& b) { return concat(a, b, 1); }},
        {"mean_rows", 4, 3, 1, 3,
         [](const Tensor& a, const Tensor& b) { return mul(mean_rows(a), b); }},
        {"sum_rows", 4, 3, 1, 3,
         [](const Tensor& a, const Tensor& b) { return mul(sum_rows(a), b); }},
        {"row_softmax", 3, 4, 3, 4,
         [](const Tensor& a, const Tensor& b) { return mul(row_softmax(a), b); }},
        {"transpose", 3, 4, 4, 3,
         [](const Tensor& a, const Tensor& b) { return mul(transpose(a), b); }},
        {"slice_cols", 3, 5, 3, 2,
         [](const Tensor& a, const Tensor& b) { return mul(slice_cols(a, 1, 3), b); }},
        {"repeat_rows", 1, 4, 3, 4,
         [](const Tensor& a, const Tensor& b) { return mul(repeat_rows(a, 3), b); }},
        {"add_rowvec", 3, 4, 1, 4,
         [](const Tensor& a, const Tensor& b) { return add_rowvec(a, b); }},
        {"frobenius_sq", 3, 3, 1, 1,
         [](const Tensor& a, const Tensor& b) { return mul(frobenius_sq(a), b); }},
    };
    for (const Case& c : cases) {
        for (int trial = 0; trial < 20; ++trial) {
            Tensor a = oracle::random_param(c.ar, c.ac, std::string(c.name) + ".a", rng);
            Tensor b = oracle::random_param(c.br, c.bc, std::string(c.name) + ".b", rng);
            auto res = oracle::fd_check(
                {a, b}, [&] { return sum_all(c.build(a, b)); }, 1e-5, 1e-5);
            ASSERT_TRUE(res.ok) << c.name << " trial " << trial << ": max rel " << res.max_rel;
        }
    }
}

TEST(Backward, PowerRule) {
    Tape tape;
    TapeScope scope(tape);
    Tensor x = Tensor::parameter(1, 1, "x", {3});
    backward(mul(x, x));
    EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
}

TEST(Backward, SumOfProductMatchesFiniteDifferences) {
    Rng rng(19);
    Tensor a = oracle::random_param(2, 3, "a", rng);
    Tensor b = oracle::random_param(3, 2, "b", rng);
    auto res = oracle::fd_check({a, b}, [&] { return sum_all(matmul(a, b)); }, 1e-5, 1e-6);
    EXPECT_TRUE(res.ok) << res.max_rel;
}

TEST(Backward, RepeatedCallsAccumulate) {
    Rng rng(23);
    Tensor a = oracle::random_param(2, 3, "a", rng);
    Tensor b = oracle::random_param(3, 2, "b", rng);
    std::vector<double> once;
    {
        Tape tape;
        TapeScope scope(tape);
        Tensor loss = sum_all(matmul(a, b));
        backward(loss);
        once = a.grad();
        backward(loss);
    }
    for (std::size_t i = 0; i < once.size(); ++i)
        EXPECT_DOUBLE_EQ(a.grad()[i], 2.0 * once[i]);
}

TEST(Backward, ErrorsOnEmptyTapeAndNonScalarLoss) {
    Tensor x = Tensor::parameter(1, 1, "x", {1});
    {
        Tape tape;
        TapeScope scope(tape);
        EXPECT_THROW(backward(x), std::runtime_error);  // nothing recorded
        Tensor y = add(x, x);
        Tensor m = concat(y, y, 1);  // 1x2
        EXPECT_THROW(backward(m), std::invalid_argument);
    }
}

TEST(Backward, UnreachableParameterHasZeroGrad) {
    Tensor used = Tensor::parameter(1, 1, "used", {2});
    Tensor unused = Tensor::parameter(1, 1, "unused", {5});
    Tape tape;
    TapeScope scope(tape);
    backward(mul(used, used));
    EXPECT_DOUBLE_EQ(unused.grad()[0], 0.0);
}

TEST(Tape, DeterministicReplay) {
    auto run = [](std::uint64_t seed) {
        Rng rng(seed);
        Tensor a = oracle::random_param(4, 4, "a", rng);
        Tensor b = oracle::random_param(4, 4, "b", rng);
        Tape tape;
        TapeScope scope(tape);
        Tensor loss = frobenius_sq(matmul(sigmoid(a), relu(b)));
        backward(loss);
        return std::make_tuple(loss.scalar_value(), a.grad(), b.grad());
    };
    const auto r1 = run(99);
    const auto r2 = run(99);
    EXPECT_EQ(std::get<0>(r1), std::get<0>(r2));
    EXPECT_EQ(std::get<1>(r1), std::get<1>(r2));
    EXPECT_EQ(std::get<2>(r1), std::get<2>(r2));
}

TEST(Tape, ClearDropsOpsKeepsParams) {
    Tensor p = Tensor::parameter(1, 1, "p", {4});
    Tape tape;
    {
        TapeScope scope(tape);
        backward(mul(p, p));
    }
    EXPECT_GT(tape.size(), 0u);
    tape.clear();
    EXPECT_EQ(tape.size(), 0u);
    EXPECT_DOUBLE_EQ(p.value()[0], 4.0);
    EXPECT_DOUBLE_EQ(p.grad()[0], 8.0);  // grads survive until zeroed by the caller
}

TEST(Adam, ZeroGradientIsFixedPoint) {
    Tensor p = Tensor::parameter(2, 2, "p", {1, 2, 3, 4});
    Adam opt({p});
    opt.step(0.001);
    EXPECT_EQ(p.value(), (std::vector<double>{1, 2, 3, 4}));
}

TEST(Adam, HandComputedFirstStep) {
    // grad 1 at t=1: bias correction gives mhat = vhat = 1, so the update is
    // exactly lr / (1 + eps).
    Tensor p = Tensor::parameter(1, 1, "p", {0.5});
    p.grad()[0] = 1.0;
    Adam opt({p});
    opt.step(0.001);
    const double expected = 0.5 - 0.001 * 1.0 / (1.0 + 1e-8);
    EXPECT_NEAR(p.value()[0], expected, 1e-15);
    EXPECT_DOUBLE_EQ(p.grad()[0], 1.0);  // step leaves grads alone
}

TEST(Adam, ConvergesOnQuadratic) {
    Tensor x = Tensor::parameter(1, 1, "x", {1.0});
    Adam opt({x});
    for (int i = 0; i < 100; ++i) {
        Tape tape;
        TapeScope scope(tape);
        backward(mul(x, x));
        opt.step(0.05);
        opt.zero_grad();
    }
    EXPECT_LT(std::abs(x.value()[0]), 0.05);
}

TEST(Adam, RejectsBadLrAndNanGrad) {
    Tensor p = Tensor::parameter(1, 1, "weird_name", {1});
    Adam opt({p});
    EXPECT_THROW(opt.step(0.0), std::invalid_argument);
    p.grad()[0] = std::nan("");
    try {
        opt.step(0.001);
        FAIL() << "expected NaN error";
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("weird_name"), std::string::npos);
    }
}

TEST(Checkpoint, RoundTripIsBitExact) {
    namespace fs = std::filesystem;
    const std::string stem = (fs::temp_directory_path() / "gtrans_ckpt_test").string();
    Rng rng(31);
    Tensor a = oracle::random_param(3, 5, "layer.w", rng);
    Tensor b = oracle::random_param(1, 5, "layer.b", rng);
    // oddball values that expose any formatting round trip
    a.value()[0] = 1.0 / 3.0;
    a.value()[1] = 1e-308;
    a.value()[2] = -0.0;
    save_params(stem, {a, b}, {{"note", 1}});
    const Checkpoint ckpt = load_checkpoint(stem);
    ASSERT_EQ(ckpt.entries.size(), 2u);
    EXPECT_EQ(ckpt.entries[0].name, "layer.w");
    EXPECT_EQ(ckpt.entries[0].data, a.value());
    EXPECT_EQ(ckpt.entries[1].data, b.value());
    std::vector<Tensor> fresh = {Tensor::parameter(3, 5, "layer.w"),
                                 Tensor::parameter(1, 5, "layer.b")};
    load_params(ckpt, fresh);
    EXPECT_EQ(fresh[0].value(), a.value());
    fs::remove(stem + ".manifest");
    fs::remove(stem + ".blob");
}

TEST(Glorot, InitWithinBound) {
    Rng rng(37);
    Tensor w = Tensor::glorot(30, 20, "w", rng);
    const double bound = std::sqrt(6.0 / 50.0);
    for (double x : w.value()) {
        EXPECT_GE(x, -bound);
        EXPECT_LE(x, bound);
    }
    Rng rng2(37);
    Tensor w2 = Tensor::glorot(30, 20, "w", rng2);
    EXPECT_EQ(w.value(), w2.value());
}
