#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "bic/errors.hpp"
#include "bic/parameters.hpp"
#include "bic/tensor.hpp"

namespace bic {

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double tol = 0.0;
    bool passed = false;

    double worst() const {
        double w = 0.0;
        for (const auto& e : entries) w = std::max(w, e.max_rel_err);
        return w;
    }
};

// Compares reverse-mode gradients against central finite differences.
// `f` must rebuild the scalar loss graph from the current parameter values
// and be deterministic (no dropout). 64-bit only; the perturbation h would
// drown in float rounding.
//
// Error metric per entry: |bp - fd| / max(|bp|, |fd|, 1e-2). The floor keeps
// finite-difference noise on near-zero gradients from dominating while still
// flagging relative errors on gradients of usable magnitude.
inline GradCheckReport grad_check(const std::function<TensorPtrT<double>()>& f,
                                  ParamStoreT<double>& params, double eps = 1e-6,
                                  double tol = 1e-4) {
    GradCheckReport report;
    report.tol = tol;

    params.zero_grads();
    auto loss = f();
    if (!all_finite(loss)) throw numeric_error("grad_check: loss is not finite");
    backward(loss);

    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.all().size());
    for (const auto& p : params.all()) {
        if (!std::all_of(p.tensor->grad.begin(), p.tensor->grad.end(),
                         [](double g) { return std::isfinite(g); }))
            throw numeric_error("grad_check: non-finite gradient on " + p.name);
        analytic.push_back(p.tensor->grad);
    }

    bool ok = true;
    for (std::size_t pi = 0; pi < params.all().size(); ++pi) {
        const auto& p = params.all()[pi];
        GradCheckEntry entry{p.name, 0.0};
        for (std::size_t i = 0; i < p.tensor->values.size(); ++i) {
            const double orig = p.tensor->values[i];
            p.tensor->values[i] = orig + eps;
            const double fp = f()->item();
            p.tensor->values[i] = orig - eps;
            const double fm = f()->item();
            p.tensor->values[i] = orig;
            if (!std::isfinite(fp) || !std::isfinite(fm))
                throw numeric_error("grad_check: non-finite loss while perturbing " + p.name);
            const double fd = (fp - fm) / (2.0 * eps);
            const double bp = analytic[pi][i];
            const double rel = std::abs(bp - fd) / std::max({std::abs(bp), std::abs(fd), 1e-2});
            entry.max_rel_err = std::max(entry.max_rel_err, rel);
        }
        if (entry.max_rel_err > tol) ok = false;
        report.entries.push_back(std::move(entry));
    }
    report.passed = ok;
    return report;
}

}  // namespace bic
