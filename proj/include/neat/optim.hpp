#pragma once

#include <cmath>
#include <vector>

#include "neat/model.hpp"

namespace neat {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Adam with bias correction; state sized lazily on first step.
class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    const AdamConfig& config() const { return cfg_; }

    void step(ModelParams& params, const GradVector& grad) {
        if (grad.size() != static_cast<std::size_t>(params.size())) throw DomainError("gradient size mismatch");
        if (m_.empty()) {
            m_.assign(params.size(), 0.0);
            v_.assign(params.size(), 0.0);
        }
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        double* w = params.data();
        for (std::size_t i = 0; i < static_cast<std::size_t>(params.size()); ++i) {
            const double g = grad[i];
            m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
            v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g * g;
            const double mhat = m_[i] / bc1;
            const double vhat = v_[i] / bc2;
            w[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }

private:
    AdamConfig cfg_;
    std::vector<double> m_, v_;
    std::int64_t t_ = 0;
};

inline void sgd_step(ModelParams& params, const GradVector& grad, double lr) {
    if (grad.size() != static_cast<std::size_t>(params.size())) throw DomainError("gradient size mismatch");
    double* w = params.data();
    for (std::size_t i = 0; i < static_cast<std::size_t>(params.size()); ++i) w[i] -= lr * grad[i];
}

}  // namespace neat
