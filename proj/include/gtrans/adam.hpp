#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "gtrans/tensor.hpp"

namespace gtrans {

// Bias-corrected Adam over an ordered parameter set. The step counter t is
// shared by every parameter in the instance. Gradients are left untouched by
// step(); the caller zeroes them (zero_grad) once the batch is done.
class Adam {
public:
    explicit Adam(std::vector<Tensor> params, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8)
        : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
        slots_.resize(params_.size());
        for (std::size_t i = 0; i < params_.size(); ++i) {
            slots_[i].m.assign(params_[i].size(), 0.0);
            slots_[i].v.assign(params_[i].size(), 0.0);
        }
    }

    void step(double lr) {
        if (lr <= 0.0)
            throw std::invalid_argument("adam: learning rate must be positive, got " +
                                        std::to_string(lr));
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (std::size_t p = 0; p < params_.size(); ++p) {
            Tensor& param = params_[p];
            param.node()->ensure_grad();
            auto& value = param.value();
            const auto& grad = param.grad();
            auto& m = slots_[p].m;
            auto& v = slots_[p].v;
            for (std::size_t i = 0; i < value.size(); ++i) {
                const double g = grad[i];
                if (std::isnan(g))
                    throw std::runtime_error("adam: NaN gradient in parameter '" +
                                             param.name() + "'");
                m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
                v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
                const double mhat = m[i] / bc1;
                const double vhat = v[i] / bc2;
                value[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
            }
        }
    }

    void zero_grad() {
        for (Tensor& p : params_) p.grad().assign(p.size(), 0.0);
    }

    const std::vector<Tensor>& params() const { return params_; }
    std::uint64_t steps() const { return t_; }

    // Checkpoint access: moments keyed by slot index, shared step counter.
    std::vector<double>& moment1(std::size_t i) { return slots_[i].m; }
    std::vector<double>& moment2(std::size_t i) { return slots_[i].v; }
    void set_steps(std::uint64_t t) { t_ = t; }

private:
    struct Slot {
        std::vector<double> m, v;
    };
    std::vector<Tensor> params_;
    std::vector<Slot> slots_;
    double beta1_, beta2_, eps_;
    std::uint64_t t_ = 0;
};

inline void zero_grads(const std::vector<Tensor>& params) {
    for (const Tensor& p : params) p.node()->grad.assign(p.size(), 0.0);
}

}  // namespace gtrans
