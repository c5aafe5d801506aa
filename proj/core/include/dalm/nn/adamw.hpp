#pragma once

#include <cmath>
#include <vector>

#include "dalm/nn/tape.hpp"

namespace dalm::nn {

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.98;
    double eps = 1e-12;
    double weight_decay = 0.01;
};

// Decoupled-weight-decay Adam. One moment pair per registered parameter;
// step() updates every trainable parameter with the given learning rate.
template <class T>
class AdamW {
public:
    AdamW(ParamRegistry<T>& reg, AdamWConfig cfg = {}) : reg_(&reg), cfg_(cfg) { sync(); }

    // Picks up parameters added to the registry after construction.
    void sync() {
        while (m_.size() < reg_->size()) {
            const size_t i = m_.size();
            m_.push_back(Tensor<T>((*reg_)[i].value.shape));
            v_.push_back(Tensor<T>((*reg_)[i].value.shape));
        }
    }

    void step(double lr) {
        sync();
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (size_t i = 0; i < reg_->size(); ++i) {
            Parameter<T>& p = (*reg_)[i];
            if (!p.trainable) continue;
            Tensor<T>& m = m_[i];
            Tensor<T>& v = v_[i];
            for (size_t j = 0; j < p.value.v.size(); ++j) {
                const double g = static_cast<double>(p.grad.v[j]);
                double mj = cfg_.beta1 * static_cast<double>(m.v[j]) + (1.0 - cfg_.beta1) * g;
                double vj = cfg_.beta2 * static_cast<double>(v.v[j]) + (1.0 - cfg_.beta2) * g * g;
                m.v[j] = static_cast<T>(mj);
                v.v[j] = static_cast<T>(vj);
                const double mhat = mj / bc1;
                const double vhat = vj / bc2;
                const double update =
                    mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * static_cast<double>(p.value.v[j]);
                p.value.v[j] = static_cast<T>(static_cast<double>(p.value.v[j]) - lr * update);
            }
        }
    }

    long step_count() const { return t_; }
    const AdamWConfig& config() const { return cfg_; }

private:
    ParamRegistry<T>* reg_;
    AdamWConfig cfg_;
    std::vector<Tensor<T>> m_, v_;
    long t_ = 0;
};

}  // namespace dalm::nn
