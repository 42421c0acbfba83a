#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "lipdub/error.hpp"
#include "lipdub/image.hpp"

namespace lipdub {

struct LossWeights {
    double alpha_rec = 1.0;
    double alpha_land = 100.0;
    double alpha_gan = 1e-4;
    double alpha_mix = 0.86;

    void validate() const {
        if (alpha_rec < 0 || alpha_land < 0 || alpha_gan < 0)
            throw ValidationError("LossWeights: weights must be >= 0");
        if (!(alpha_mix >= 0.0 && alpha_mix <= 1.0))
            throw ValidationError("LossWeights: alpha_mix must lie in [0,1]");
    }
};

namespace detail {

constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;
constexpr double kSsimC1 = 0.01 * 0.01;  // (0.01 L)^2 at unit dynamic range
constexpr double kSsimC2 = 0.03 * 0.03;

inline const std::array<double, kSsimWindow>& ssim_window_1d() {
    static const std::array<double, kSsimWindow> w = [] {
        std::array<double, kSsimWindow> k{};
        double sum = 0.0;
        for (int i = 0; i < kSsimWindow; ++i) {
            const double d = i - (kSsimWindow - 1) / 2.0;
            k[i] = std::exp(-0.5 * d * d / (kSsimSigma * kSsimSigma));
            sum += k[i];
        }
        for (double& v : k) v /= sum;
        return k;
    }();
    return w;
}

struct WindowStats {
    double mx, my, sxx, syy, sxy;
};

// Weighted stats of the 11x11 window whose top-left corner is (wy, wx).
inline WindowStats window_stats(const ImageBuf& x, const ImageBuf& y, int wy, int wx, int c) {
    const auto& k = ssim_window_1d();
    WindowStats s{0, 0, 0, 0, 0};
    for (int j = 0; j < kSsimWindow; ++j)
        for (int i = 0; i < kSsimWindow; ++i) {
            const double w = k[j] * k[i];
            const double xv = x.at(wy + j, wx + i, c);
            const double yv = y.at(wy + j, wx + i, c);
            s.mx += w * xv;
            s.my += w * yv;
            s.sxx += w * xv * xv;
            s.syy += w * yv * yv;
            s.sxy += w * xv * yv;
        }
    s.sxx -= s.mx * s.mx;
    s.syy -= s.my * s.my;
    s.sxy -= s.mx * s.my;
    return s;
}

enum class SsimTerm { full, cs_only };

// Mean of local SSIM (or of the contrast-structure factor) over all valid
// windows and channels, with an optional analytic gradient w.r.t. x.
inline double ssim_mean(const ImageBuf& x, const ImageBuf& y, SsimTerm term,
                        std::vector<double>* grad_x) {
    if (!x.same_shape(y)) throw ValidationError("ssim: image shapes differ");
    if (x.height < kSsimWindow || x.width < kSsimWindow)
        throw ValidationError("ssim: image smaller than the 11x11 window");
    const int vh = x.height - kSsimWindow + 1;
    const int vw = x.width - kSsimWindow + 1;
    const double n_terms = static_cast<double>(vh) * vw * x.channels;
    const auto& k = ssim_window_1d();

    if (grad_x) grad_x->assign(x.data.size(), 0.0);
    double total = 0.0;
    for (int c = 0; c < x.channels; ++c)
        for (int wy = 0; wy < vh; ++wy)
            for (int wx = 0; wx < vw; ++wx) {
                const WindowStats s = window_stats(x, y, wy, wx, c);
                const double a1 = 2.0 * s.mx * s.my + kSsimC1;
                const double a2 = 2.0 * s.sxy + kSsimC2;
                const double b1 = s.mx * s.mx + s.my * s.my + kSsimC1;
                const double b2 = s.sxx + s.syy + kSsimC2;
                total += term == SsimTerm::full ? (a1 * a2) / (b1 * b2) : a2 / b2;
                if (!grad_x) continue;
                for (int j = 0; j < kSsimWindow; ++j)
                    for (int i = 0; i < kSsimWindow; ++i) {
                        const double w = k[j] * k[i];
                        const double xv = x.at(wy + j, wx + i, c);
                        const double yv = y.at(wy + j, wx + i, c);
                        double g;
                        if (term == SsimTerm::full) {
                            const double da1 = 2.0 * s.my * w;
                            const double da2 = 2.0 * w * (yv - s.my);
                            const double db1 = 2.0 * s.mx * w;
                            const double db2 = 2.0 * w * (xv - s.mx);
                            g = ((da1 * a2 + a1 * da2) * b1 * b2 -
                                 a1 * a2 * (db1 * b2 + b1 * db2)) /
                                (b1 * b2 * b1 * b2);
                        } else {
                            const double da2 = 2.0 * w * (yv - s.my);
                            const double db2 = 2.0 * w * (xv - s.mx);
                            g = (da2 * b2 - a2 * db2) / (b2 * b2);
                        }
                        (*grad_x)[(static_cast<size_t>(wy + j) * x.width + (wx + i)) * x.channels +
                                  c] += g / n_terms;
                    }
            }
    return total / n_terms;
}

inline ImageBuf avg_pool2(const ImageBuf& img) {
    ImageBuf out = ImageBuf::make(img.height / 2, img.width / 2, img.channels);
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x)
            for (int c = 0; c < img.channels; ++c)
                out.at(y, x, c) = 0.25 * (img.at(2 * y, 2 * x, c) + img.at(2 * y, 2 * x + 1, c) +
                                          img.at(2 * y + 1, 2 * x, c) +
                                          img.at(2 * y + 1, 2 * x + 1, c));
    return out;
}

// Adjoint of avg_pool2: distribute each coarse gradient over its 2x2 block.
inline void avg_pool2_backprop(const std::vector<double>& coarse, int ch, int cw, int channels,
                               std::vector<double>* fine, int fh, int fw) {
    fine->assign(static_cast<size_t>(fh) * fw * channels, 0.0);
    for (int y = 0; y < ch; ++y)
        for (int x = 0; x < cw; ++x)
            for (int c = 0; c < channels; ++c) {
                const double g = 0.25 * coarse[(static_cast<size_t>(y) * cw + x) * channels + c];
                for (int dy = 0; dy < 2; ++dy)
                    for (int dx = 0; dx < 2; ++dx)
                        (*fine)[(static_cast<size_t>(2 * y + dy) * fw + (2 * x + dx)) * channels +
                                c] += g;
            }
}

inline const std::array<double, 5>& msssim_weights5() {
    static const std::array<double, 5> w = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
    return w;
}

}  // namespace detail

inline double ssim(const ImageBuf& x, const ImageBuf& y, std::vector<double>* grad_x = nullptr) {
    return detail::ssim_mean(x, y, detail::SsimTerm::full, grad_x);
}

// Product over scales: contrast-structure means below the coarsest level, a
// full SSIM mean at the coarsest, each raised to the conventional exponent
// (prefix-renormalized when fewer than 5 levels are used).
inline double ms_ssim(const ImageBuf& x, const ImageBuf& y, int levels = 5,
                      std::vector<double>* grad_x = nullptr) {
    if (!x.same_shape(y)) throw ValidationError("ms_ssim: image shapes differ");
    if (levels < 1 || levels > 5) throw ValidationError("ms_ssim: levels must lie in [1, 5]");
    const int min_dim = std::min(x.height, x.width);
    const int needed = detail::kSsimWindow << (levels - 1);
    if (min_dim < needed) {
        int feasible = 0;
        while (feasible < 5 && (detail::kSsimWindow << feasible) <= min_dim) ++feasible;
        throw ValidationError("ms_ssim: image too small for " + std::to_string(levels) +
                              " levels; at most " + std::to_string(feasible) + " feasible");
    }
    std::vector<double> w(detail::msssim_weights5().begin(),
                          detail::msssim_weights5().begin() + levels);
    const double wsum = std::accumulate(w.begin(), w.end(), 0.0);
    for (double& v : w) v /= wsum;
    if (levels == 1) {
        const double s = ssim(x, y, grad_x);
        return s;  // single level: exponent is exactly 1
    }

    std::vector<ImageBuf> xs{x}, ys{y};
    for (int l = 1; l < levels; ++l) {
        xs.push_back(detail::avg_pool2(xs.back()));
        ys.push_back(detail::avg_pool2(ys.back()));
    }
    std::vector<double> terms(levels);
    std::vector<std::vector<double>> level_grads(grad_x ? levels : 0);
    for (int l = 0; l < levels; ++l) {
        const auto term = l == levels - 1 ? detail::SsimTerm::full : detail::SsimTerm::cs_only;
        terms[l] = detail::ssim_mean(xs[l], ys[l], term, grad_x ? &level_grads[l] : nullptr);
        if (terms[l] <= 0.0)
            throw DegenerateInput("ms_ssim: non-positive level mean, product form undefined");
    }
    double value = 1.0;
    for (int l = 0; l < levels; ++l) value *= std::pow(terms[l], w[l]);

    if (grad_x) {
        grad_x->assign(x.data.size(), 0.0);
        for (int l = 0; l < levels; ++l) {
            const double coef = value * w[l] / terms[l];
            std::vector<double> g = level_grads[l];
            for (int up = l; up > 0; --up) {
                std::vector<double> finer;
                detail::avg_pool2_backprop(g, xs[up].height, xs[up].width, x.channels, &finer,
                                           xs[up - 1].height, xs[up - 1].width);
                g = std::move(finer);
            }
            for (size_t i = 0; i < grad_x->size(); ++i) (*grad_x)[i] += coef * g[i];
        }
    }
    return value;
}

inline double l1_mean(const ImageBuf& x, const ImageBuf& y, std::vector<double>* grad_x = nullptr) {
    if (!x.same_shape(y)) throw ValidationError("l1_mean: image shapes differ");
    const double n = static_cast<double>(x.data.size());
    if (grad_x) grad_x->assign(x.data.size(), 0.0);
    double acc = 0.0;
    for (size_t i = 0; i < x.data.size(); ++i) {
        const double d = x.data[i] - y.data[i];
        acc += std::abs(d);
        if (grad_x) (*grad_x)[i] = (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)) / n;
    }
    return acc / n;
}

// alpha_mix * (1 - MS-SSIM) + (1 - alpha_mix) * mean L1. Inputs are expected
// to be loss-masked composites; compositing is the caller's duty.
inline double rec_loss(const ImageBuf& x, const ImageBuf& y, const LossWeights& w, int levels = 5,
                       std::vector<double>* grad_x = nullptr) {
    w.validate();
    std::vector<double> g_ms, g_l1;
    const double ms = ms_ssim(x, y, levels, grad_x ? &g_ms : nullptr);
    const double l1 = l1_mean(x, y, grad_x ? &g_l1 : nullptr);
    if (grad_x) {
        grad_x->assign(x.data.size(), 0.0);
        for (size_t i = 0; i < grad_x->size(); ++i)
            (*grad_x)[i] = -w.alpha_mix * g_ms[i] + (1.0 - w.alpha_mix) * g_l1[i];
    }
    return w.alpha_mix * (1.0 - ms) + (1.0 - w.alpha_mix) * l1;
}

// 10 log10(1 / MSE) at unit dynamic range; +inf for identical images.
inline double psnr(const ImageBuf& x, const ImageBuf& y) {
    if (!x.same_shape(y)) throw ValidationError("psnr: image shapes differ");
    double mse = 0.0;
    for (size_t i = 0; i < x.data.size(); ++i) {
        const double d = x.data[i] - y.data[i];
        mse += d * d;
    }
    mse /= static_cast<double>(x.data.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

enum class LandmarkLossForm {
    squared_l2,   // sum of squared residuals over all 26 coordinates
    printed_sum,  // residuals summed per point before squaring
};

inline double landmark_loss(const std::vector<Vec2>& pred, const std::vector<Vec2>& target,
                            LandmarkLossForm form = LandmarkLossForm::squared_l2,
                            std::vector<Vec2>* grad = nullptr) {
    if (pred.size() != 13 || target.size() != 13)
        throw ValidationError("landmark_loss: expects 13 predicted and 13 target points");
    if (grad) grad->assign(13, Vec2{});
    double acc = 0.0;
    for (size_t l = 0; l < 13; ++l) {
        const double dx = pred[l].x - target[l].x;
        const double dy = pred[l].y - target[l].y;
        if (form == LandmarkLossForm::squared_l2) {
            acc += dx * dx + dy * dy;
            if (grad) (*grad)[l] = {2.0 * dx, 2.0 * dy};
        } else {
            const double s = dx + dy;
            acc += s * s;
            if (grad) (*grad)[l] = {2.0 * s, 2.0 * s};
        }
    }
    return acc;
}

inline double hinge_d_loss(const std::vector<double>& d_real, const std::vector<double>& d_fake) {
    if (d_real.empty() || d_fake.empty()) throw ValidationError("hinge_d_loss: empty score list");
    double lr = 0.0, lf = 0.0;
    for (double v : d_real) lr += std::max(0.0, 1.0 - v);
    for (double v : d_fake) lf += std::max(0.0, 1.0 + v);
    return lr / d_real.size() + lf / d_fake.size();
}

inline double hinge_g_loss(const std::vector<double>& d_fake) {
    if (d_fake.empty()) throw ValidationError("hinge_g_loss: empty score list");
    double acc = 0.0;
    for (double v : d_fake) acc += v;
    return acc / d_fake.size();
}

struct BceGanLosses {
    double l_x = 0.0;
    double l_xa = 0.0;
    bool clamped = false;  // some probability hit the [eps, 1-eps] clamp
};

// Log-form discriminator objectives for the image and the audio-conditioned
// video discriminator; probabilities are clamped away from 0 and 1.
inline BceGanLosses bce_gan_losses(const std::vector<double>& dx_real,
                                   const std::vector<double>& dx_fake,
                                   const std::vector<double>& dxa_real,
                                   const std::vector<double>& dxa_fake) {
    constexpr double eps = 1e-7;
    BceGanLosses out;
    const auto term = [&out, eps](const std::vector<double>& probs, bool as_real) {
        if (probs.empty()) throw ValidationError("bce_gan_losses: empty score list");
        double acc = 0.0;
        for (double p : probs) {
            if (p < eps || p > 1.0 - eps) {
                p = std::clamp(p, eps, 1.0 - eps);
                out.clamped = true;
            }
            acc += std::log(as_real ? p : 1.0 - p);
        }
        return acc / probs.size();
    };
    out.l_x = term(dx_real, true) + term(dx_fake, false);
    out.l_xa = term(dxa_real, true) + term(dxa_fake, false);
    return out;
}

enum class AttentionSign {
    negative_exponent,  // verbatim formula: higher similarity, lower weight
    positive_exponent,
};

struct AttentionResult {
    std::vector<double> weights;
    std::vector<double> blended;
};

// alpha_n = exp(-logistic(A . R_n)) / sum_i exp(-logistic(A . R_i)), plus the
// weighted reference blend R = sum alpha_n R_n.
inline AttentionResult attention_weights(const std::vector<double>& audio_key,
                                         const std::vector<std::vector<double>>& ref_embeddings,
                                         AttentionSign sign = AttentionSign::negative_exponent) {
    if (ref_embeddings.empty()) throw ValidationError("attention_weights: no references");
    const size_t dim = audio_key.size();
    std::vector<double> logits(ref_embeddings.size());
    for (size_t n = 0; n < ref_embeddings.size(); ++n) {
        if (ref_embeddings[n].size() != dim)
            throw ValidationError("attention_weights: embedding dimension mismatch");
        double dotp = 0.0;
        for (size_t i = 0; i < dim; ++i) dotp += audio_key[i] * ref_embeddings[n][i];
        const double sig = 1.0 / (1.0 + std::exp(-dotp));
        logits[n] = sign == AttentionSign::negative_exponent ? -sig : sig;
    }
    const double m = *std::max_element(logits.begin(), logits.end());
    AttentionResult res;
    res.weights.resize(logits.size());
    double z = 0.0;
    for (size_t n = 0; n < logits.size(); ++n) {
        res.weights[n] = std::exp(logits[n] - m);
        z += res.weights[n];
    }
    for (double& w : res.weights) w /= z;
    res.blended.assign(dim, 0.0);
    for (size_t n = 0; n < ref_embeddings.size(); ++n)
        for (size_t i = 0; i < dim; ++i) res.blended[i] += res.weights[n] * ref_embeddings[n][i];
    return res;
}

struct GaussianStats {
    Eigen::VectorXd mean;
    Eigen::MatrixXd covariance;

    void validate() const {
        if (covariance.rows() != covariance.cols() || covariance.rows() != mean.size())
            throw ValidationError("GaussianStats: dimension mismatch");
        const double asym = (covariance - covariance.transpose()).cwiseAbs().maxCoeff();
        if (asym > 1e-9) throw ValidationError("GaussianStats: covariance not symmetric");
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(covariance);
        if (es.eigenvalues().minCoeff() < -1e-9)
            throw ValidationError("GaussianStats: covariance has negative eigenvalues");
    }
};

inline GaussianStats stats_from_embeddings(const std::vector<std::vector<double>>& embs) {
    if (embs.size() < 2) throw ValidationError("stats_from_embeddings: need at least 2 vectors");
    const size_t dim = embs[0].size();
    for (const auto& e : embs)
        if (e.size() != dim) throw ValidationError("stats_from_embeddings: dimension mismatch");
    GaussianStats s;
    s.mean = Eigen::VectorXd::Zero(dim);
    for (const auto& e : embs)
        for (size_t i = 0; i < dim; ++i) s.mean(i) += e[i];
    s.mean /= static_cast<double>(embs.size());
    s.covariance = Eigen::MatrixXd::Zero(dim, dim);
    for (const auto& e : embs) {
        Eigen::VectorXd d(dim);
        for (size_t i = 0; i < dim; ++i) d(i) = e[i] - s.mean(i);
        s.covariance += d * d.transpose();
    }
    s.covariance /= static_cast<double>(embs.size() - 1);
    s.covariance = ((s.covariance + s.covariance.transpose()) / 2.0).eval();
    return s;
}

namespace detail {

// Symmetric PSD square root with negative eigenvalues clipped at tolerance.
inline Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m, double tol) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es((m + m.transpose()) / 2.0);
    Eigen::VectorXd ev = es.eigenvalues();
    for (int i = 0; i < ev.size(); ++i) {
        if (ev(i) < tol) throw ValidationError("frechet_distance: covariance not PSD");
        ev(i) = std::sqrt(std::max(0.0, ev(i)));
    }
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace detail

// ||mu_a - mu_b||^2 + tr(Sa + Sb - 2 (Sa Sb)^(1/2)), via sqrt(Sa) Sb sqrt(Sa).
inline double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
    if (a.mean.size() != b.mean.size())
        throw ValidationError("frechet_distance: dimension mismatch");
    constexpr double tol = -1e-6;
    const Eigen::MatrixXd sa = detail::psd_sqrt(a.covariance, tol);
    const Eigen::MatrixXd inner = sa * b.covariance * sa;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es((inner + inner.transpose()) / 2.0);
    double tr_sqrt = 0.0;
    for (int i = 0; i < es.eigenvalues().size(); ++i) {
        const double ev = es.eigenvalues()(i);
        if (ev < tol) throw ValidationError("frechet_distance: product matrix not PSD");
        tr_sqrt += std::sqrt(std::max(0.0, ev));
    }
    const double d2 = (a.mean - b.mean).squaredNorm() + a.covariance.trace() +
                      b.covariance.trace() - 2.0 * tr_sqrt;
    return std::max(0.0, d2);
}

inline double total_objective(double rec, double land, double gan, const LossWeights& w) {
    w.validate();
    if (!std::isfinite(rec) || !std::isfinite(land) || !std::isfinite(gan))
        throw ValidationError("total_objective: non-finite component");
    return w.alpha_rec * rec + w.alpha_land * land + w.alpha_gan * gan;
}

}  // namespace lipdub
