#pragma once

#include <cmath>
#include <vector>

#include "setgen/core/param.hpp"

namespace setgen {

struct AdamWConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.95;
    double eps = 1e-8;
    double weight_decay = 0.01;
    double grad_clip = 0.0;  // global L2 clip; 0 disables
};

// Cosine decay from lr_max to lr_min over total_steps, with linear warmup.
inline double cosine_lr(long step, long total_steps, double lr_max, double lr_min = 0.0,
                        long warmup = 0) {
    if (warmup > 0 && step < warmup) return lr_max * static_cast<double>(step + 1) / warmup;
    const long t = std::min(step, total_steps);
    const double denom = static_cast<double>(std::max<long>(1, total_steps - warmup));
    const double frac = static_cast<double>(t - warmup) / denom;
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(M_PI * std::min(1.0, frac)));
}

// Decoupled weight decay Adam. Holds first/second moment state per tensor;
// the tensor list must be registered once, in a fixed order.
template <typename S>
class AdamW {
public:
    explicit AdamW(AdamWConfig cfg) : cfg_(cfg) {}

    void add_param(Tensor<S>* t) {
        params_.push_back(t);
        m_.push_back(Mat<S>::Zero(t->rows(), t->cols()));
        v_.push_back(Mat<S>::Zero(t->rows(), t->cols()));
    }

    void zero_grad() {
        for (auto* t : params_) t->zero_grad();
    }

    // One update with the given learning rate; increments the step counter.
    void step(double lr) {
        ++t_;
        if (cfg_.grad_clip > 0.0) {
            double sq = 0.0;
            for (auto* p : params_) sq += static_cast<double>(p->g.squaredNorm());
            const double norm = std::sqrt(sq);
            if (norm > cfg_.grad_clip) {
                const S sc = static_cast<S>(cfg_.grad_clip / norm);
                for (auto* p : params_) p->g *= sc;
            }
        }
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (size_t k = 0; k < params_.size(); ++k) {
            Tensor<S>& p = *params_[k];
            m_[k] = static_cast<S>(cfg_.beta1) * m_[k] + static_cast<S>(1.0 - cfg_.beta1) * p.g;
            v_[k] = static_cast<S>(cfg_.beta2) * v_[k] +
                    static_cast<S>(1.0 - cfg_.beta2) * p.g.cwiseProduct(p.g);
            Mat<S> mhat = m_[k] / static_cast<S>(bc1);
            Mat<S> vhat = v_[k] / static_cast<S>(bc2);
            if (p.decay && cfg_.weight_decay > 0.0)
                p.v -= static_cast<S>(lr * cfg_.weight_decay) * p.v;
            p.v -= static_cast<S>(lr) *
                   (mhat.array() / (vhat.array().sqrt() + static_cast<S>(cfg_.eps))).matrix();
        }
    }

    long steps_taken() const { return t_; }
    const AdamWConfig& config() const { return cfg_; }

    // Moment state access for checkpointing.
    size_t size() const { return params_.size(); }
    Mat<S>& moment1(size_t k) { return m_[k]; }
    Mat<S>& moment2(size_t k) { return v_[k]; }
    void set_steps(long t) { t_ = t; }

private:
    AdamWConfig cfg_;
    std::vector<Tensor<S>*> params_;
    std::vector<Mat<S>> m_, v_;
    long t_ = 0;
};

}  // namespace setgen
