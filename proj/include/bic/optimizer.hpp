#pragma once

#include <cmath>
#include <vector>

#include "bic/errors.hpp"
#include "bic/parameters.hpp"

namespace bic {

struct OptimConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;  // decoupled, applied directly to the weights
    bool rectified = true;      // variance-rectified warmup; plain AdamW when off
};

// Adam with decoupled weight decay and an optional rectified-variance warmup
// (the update falls back to bias-corrected momentum while the variance
// estimate is still unreliable).
template <typename S>
class OptimizerT {
public:
    OptimizerT(const ParamStoreT<S>& params, OptimConfig cfg) : cfg_(cfg) {
        m_.reserve(params.all().size());
        v_.reserve(params.all().size());
        for (const auto& p : params.all()) {
            m_.emplace_back(p.tensor->values.size(), 0.0);
            v_.emplace_back(p.tensor->values.size(), 0.0);
        }
    }

    void step(ParamStoreT<S>& params) {
        if (params.all().size() != m_.size()) throw train_error("optimizer/parameter count mismatch");
        ++step_count_;
        const double t = static_cast<double>(step_count_);
        const double bc1 = 1.0 - std::pow(cfg_.beta1, t);
        const double bc2 = 1.0 - std::pow(cfg_.beta2, t);
        const double rho_inf = 2.0 / (1.0 - cfg_.beta2) - 1.0;
        const double rho_t = rho_inf - 2.0 * t * std::pow(cfg_.beta2, t) / bc2;
        const bool use_adaptive = !cfg_.rectified || rho_t > 4.0;
        double rect = 1.0;
        if (cfg_.rectified && use_adaptive) {
            rect = std::sqrt((rho_t - 4.0) * (rho_t - 2.0) * rho_inf /
                             ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t));
        }

        for (std::size_t pi = 0; pi < m_.size(); ++pi) {
            auto& p = *params.all()[pi].tensor;
            if (p.grad.size() != p.values.size())
                throw train_error("missing gradient for parameter " + params.all()[pi].name);
            auto& m = m_[pi];
            auto& v = v_[pi];
            for (std::size_t i = 0; i < p.values.size(); ++i) {
                const double g = static_cast<double>(p.grad[i]);
                m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
                v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
                const double m_hat = m[i] / bc1;
                double update;
                if (use_adaptive) {
                    update = rect * m_hat / (std::sqrt(v[i] / bc2) + cfg_.eps);
                } else {
                    update = m_hat;
                }
                double w = static_cast<double>(p.values[i]);
                w -= cfg_.lr * cfg_.weight_decay * w;
                w -= cfg_.lr * update;
                p.values[i] = static_cast<S>(w);
            }
        }
    }

    long step_count() const { return step_count_; }
    double lr() const { return cfg_.lr; }
    void set_lr(double lr) { cfg_.lr = lr; }

private:
    OptimConfig cfg_;
    long step_count_ = 0;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
};

}  // namespace bic
