#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "bic/model.hpp"
#include "bic/optimizer.hpp"

namespace bic {

struct EvalResult {
    double accuracy = 0.0;
    double f1 = 0.0;  // bot (label 1) is the positive class
    int total = 0;
};

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0;
    double val_accuracy = 0.0;
    double val_f1 = 0.0;
    double lr = 0.0;
};

struct TrainHistory {
    std::vector<EpochStats> epochs;
    int best_epoch = -1;
    double best_val_accuracy = 0.0;
    bool stopped_early = false;
};

// Halves-nothing plateau rule: after `patience` consecutive epochs without
// improvement the learning rate is multiplied by `factor` and the counter
// resets. LR never increases.
class PlateauScheduler {
public:
    PlateauScheduler(int patience, double factor) : patience_(patience), factor_(factor) {}

    // returns true when the rate was reduced this step
    bool step(bool improved, double& lr) {
        if (improved) {
            stale_ = 0;
            return false;
        }
        if (++stale_ >= patience_) {
            stale_ = 0;
            lr *= factor_;
            return true;
        }
        return false;
    }

    int stale() const { return stale_; }

private:
    int patience_;
    double factor_;
    int stale_ = 0;
};

class EarlyStopper {
public:
    explicit EarlyStopper(int patience) : patience_(patience) {}

    // returns true when training should stop
    bool step(bool improved) {
        if (improved) {
            stale_ = 0;
            return false;
        }
        return ++stale_ >= patience_;
    }

    int stale() const { return stale_; }

private:
    int patience_;
    int stale_ = 0;
};

inline EvalResult metrics_from_predictions(const std::vector<int>& preds,
                                           const std::vector<int>& labels) {
    if (preds.empty() || preds.size() != labels.size())
        throw train_error("metrics: empty or mismatched predictions");
    int correct = 0, tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        correct += preds[i] == labels[i];
        tp += preds[i] == 1 && labels[i] == 1;
        fp += preds[i] == 1 && labels[i] == 0;
        fn += preds[i] == 0 && labels[i] == 1;
    }
    EvalResult r;
    r.total = static_cast<int>(preds.size());
    r.accuracy = static_cast<double>(correct) / r.total;
    const double denom = 2.0 * tp + fp + fn;
    r.f1 = denom > 0.0 ? 2.0 * tp / denom : 0.0;
    return r;
}

template <typename S>
EvalResult evaluate_model(BICModelT<S>& model, const std::vector<PreparedUserT<S>>& users) {
    if (users.empty()) throw train_error("evaluate: empty split");
    std::vector<int> preds, labels;
    preds.reserve(users.size());
    for (const auto& u : users) {
        if (u.label < 0) throw train_error("evaluate: user " + u.id + " has no label");
        preds.push_back(model.forward(u, /*training=*/false).predicted());
        labels.push_back(u.label);
    }
    return metrics_from_predictions(preds, labels);
}

// Prepares every user of a split once; ego sampling and removal masks are
// seeded, so the result is identical across epochs and runs.
template <typename S>
std::vector<PreparedUserT<S>> prepare_split(BICModelT<S>& model, const Dataset& ds,
                                            const std::vector<int>& split) {
    std::vector<PreparedUserT<S>> out;
    out.reserve(split.size());
    const auto& cfg = model.config();
    for (int idx : split) {
        auto ego = ego_graph(ds, ds.users[idx].id, cfg.neighbor_cap, Rng::mix(cfg.seed, 4));
        out.push_back(model.prepare(ds, idx, ego));
    }
    return out;
}

// Minibatch training with a best-validation checkpoint. Fully determined by
// the model config's seed. When the validation split is empty the loop runs
// all epochs and keeps the final parameters.
template <typename S>
TrainHistory train_model(BICModelT<S>& model, const Dataset& ds) {
    const ModelConfig& cfg = model.config();
    if (ds.train_idx.empty()) throw config_error("train: empty train split");

    auto train_users = prepare_split(model, ds, ds.train_idx);
    auto val_users = prepare_split(model, ds, ds.val_idx);

    OptimConfig ocfg;
    ocfg.lr = cfg.lr;
    ocfg.weight_decay = cfg.weight_decay;
    ocfg.rectified = cfg.rectified_adam;
    OptimizerT<S> opt(model.params(), ocfg);
    PlateauScheduler scheduler(cfg.lr_patience, cfg.lr_factor);
    EarlyStopper stopper(cfg.early_stop_patience);
    Rng shuffle_rng(Rng::mix(cfg.seed, 2));

    TrainHistory history;
    auto best_params = model.params().snapshot();

    std::vector<int> order(train_users.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double loss_sum = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            std::vector<TensorPtrT<S>> logits;
            std::vector<int> labels;
            logits.reserve(end - start);
            for (std::size_t i = start; i < end; ++i) {
                const auto& u = train_users[order[i]];
                logits.push_back(model.forward(u, /*training=*/true).logits);
                labels.push_back(u.label);
            }
            model.params().zero_grads();
            auto loss = model.loss(logits, labels, cfg.l2_lambda);
            if (!all_finite(loss)) throw numeric_error("train: loss diverged to non-finite");
            backward(loss);
            opt.step(model.params());
            loss_sum += static_cast<double>(loss->item()) * static_cast<double>(end - start);
            seen += end - start;
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = loss_sum / static_cast<double>(seen);
        stats.lr = opt.lr();

        bool improved = false;
        if (!val_users.empty()) {
            auto val = evaluate_model(model, val_users);
            stats.val_accuracy = val.accuracy;
            stats.val_f1 = val.f1;
            improved = val.accuracy > history.best_val_accuracy || history.best_epoch < 0;
        } else {
            improved = true;  // no validation signal; final epoch wins
        }
        if (improved) {
            history.best_epoch = epoch;
            history.best_val_accuracy = stats.val_accuracy;
            best_params = model.params().snapshot();
        }
        history.epochs.push_back(stats);

        double lr = opt.lr();
        scheduler.step(improved, lr);
        opt.set_lr(lr);
        if (!val_users.empty() && stopper.step(improved)) {
            history.stopped_early = true;
            break;
        }
    }

    model.params().restore(best_params);
    return history;
}

}  // namespace bic
