#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "lipdub/error.hpp"
#include "lipdub/landmarks.hpp"

namespace lipdub {

struct RefSelection {
    std::vector<int> indices;  // unique, sorted
    std::string strategy;
    std::optional<int> excluded_target;

    void validate(int requested_k) const {
        if (static_cast<int>(indices.size()) > requested_k)
            throw ValidationError("RefSelection: more indices than requested");
        for (size_t i = 0; i + 1 < indices.size(); ++i)
            if (indices[i] >= indices[i + 1])
                throw ValidationError("RefSelection: indices must be unique and sorted");
        if (excluded_target)
            for (int idx : indices)
                if (idx == *excluded_target)
                    throw ValidationError("RefSelection: contains the excluded target");
    }
};

// 27 values: the 13 mouth/jaw coordinates normalized by the crop size, then
// the in-plane head roll (angle of the inter-eye segment, radians).
inline std::vector<double> frame_features(const LandmarkSet& lm, int crop_size = 256) {
    std::vector<double> f;
    f.reserve(27);
    for (const auto& name : landmark_names::mouth_jaw()) {
        const Vec2 p = lm.get(name);
        f.push_back(p.x / crop_size);
        f.push_back(p.y / crop_size);
    }
    const Vec2 d = lm.get("right_eye") - lm.get("left_eye");
    f.push_back(std::atan2(d.y, d.x));
    return f;
}

struct KMeansResult {
    std::vector<int> assignments;
    std::vector<std::vector<double>> centroids;
    double wcss = 0.0;
    int iterations = 0;
};

namespace detail {

inline double sqdist(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}

inline KMeansResult lloyd_once(const std::vector<std::vector<double>>& pts, int k,
                               std::mt19937_64& rng, int max_iter, double tol) {
    const int n = static_cast<int>(pts.size());
    const size_t dim = pts[0].size();

    // k-means++ seeding
    std::vector<std::vector<double>> centers;
    centers.reserve(k);
    std::uniform_int_distribution<int> first(0, n - 1);
    centers.push_back(pts[first(rng)]);
    std::vector<double> d2(n);
    while (static_cast<int>(centers.size()) < k) {
        double total = 0.0;
        for (int i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::max();
            for (const auto& c : centers) best = std::min(best, sqdist(pts[i], c));
            d2[i] = best;
            total += best;
        }
        int pick;
        if (total <= 0.0) {
            pick = std::uniform_int_distribution<int>(0, n - 1)(rng);
        } else {
            std::uniform_real_distribution<double> u(0.0, total);
            double r = u(rng), acc = 0.0;
            pick = n - 1;
            for (int i = 0; i < n; ++i) {
                acc += d2[i];
                if (r <= acc) {
                    pick = i;
                    break;
                }
            }
        }
        centers.push_back(pts[pick]);
    }

    KMeansResult res;
    res.assignments.assign(n, 0);
    double prev_wcss = std::numeric_limits<double>::max();
    for (int it = 0; it < max_iter; ++it) {
        res.iterations = it + 1;
        double wcss = 0.0;
        for (int i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::max();
            int arg = 0;
            for (int c = 0; c < k; ++c) {
                const double d = sqdist(pts[i], centers[c]);
                if (d < best) {
                    best = d;
                    arg = c;
                }
            }
            res.assignments[i] = arg;
            wcss += best;
        }
        std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
        std::vector<int> counts(k, 0);
        for (int i = 0; i < n; ++i) {
            for (size_t j = 0; j < dim; ++j) sums[res.assignments[i]][j] += pts[i][j];
            ++counts[res.assignments[i]];
        }
        for (int c = 0; c < k; ++c) {
            if (counts[c] == 0) {
                // reseed an emptied cluster at the point farthest from its center
                int far_i = 0;
                double far_d = -1.0;
                for (int i = 0; i < n; ++i) {
                    const double d = sqdist(pts[i], centers[res.assignments[i]]);
                    if (d > far_d) {
                        far_d = d;
                        far_i = i;
                    }
                }
                centers[c] = pts[far_i];
            } else {
                for (size_t j = 0; j < dim; ++j) centers[c][j] = sums[c][j] / counts[c];
            }
        }
        res.wcss = wcss;
        if (prev_wcss < std::numeric_limits<double>::max()) {
            const double rel = std::abs(prev_wcss - wcss) / std::max(prev_wcss, 1e-300);
            if (rel < tol) break;
        }
        prev_wcss = wcss;
    }

    // final assignment against the last centers, so wcss matches centroids
    double wcss = 0.0;
    for (int i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::max();
        int arg = 0;
        for (int c = 0; c < k; ++c) {
            const double d = sqdist(pts[i], centers[c]);
            if (d < best) {
                best = d;
                arg = c;
            }
        }
        res.assignments[i] = arg;
        wcss += best;
    }
    res.wcss = wcss;
    res.centroids = std::move(centers);
    return res;
}

}  // namespace detail

// Seeded Lloyd's with k-means++ init; the best of `restarts` deterministic
// restarts by within-cluster sum of squares is returned.
inline KMeansResult kmeans_cluster(const std::vector<std::vector<double>>& pts, int k,
                                   uint64_t seed, int max_iter = 100, double tol = 1e-6,
                                   int restarts = 10) {
    if (pts.empty()) throw ValidationError("kmeans_cluster: no points");
    if (k < 1) throw ValidationError("kmeans_cluster: k must be >= 1");
    for (const auto& p : pts)
        if (p.size() != pts[0].size())
            throw ValidationError("kmeans_cluster: inconsistent feature dimensions");
    k = std::min<int>(k, static_cast<int>(pts.size()));

    KMeansResult best;
    best.wcss = std::numeric_limits<double>::max();
    for (int r = 0; r < std::max(1, restarts); ++r) {
        std::mt19937_64 rng(seed + 0x9e3779b97f4a7c15ULL * static_cast<uint64_t>(r + 1));
        KMeansResult res = detail::lloyd_once(pts, k, rng, max_iter, tol);
        if (res.wcss < best.wcss) best = std::move(res);
    }
    return best;
}

// K-means over the non-excluded frames; one representative per cluster (the
// frame nearest its centroid, lowest index on ties).
inline RefSelection select_references_kmeans(const std::vector<std::vector<double>>& features,
                                             int k, uint64_t seed,
                                             std::optional<int> exclude = std::nullopt) {
    if (k < 1) throw ValidationError("select_references_kmeans: k must be >= 1");
    std::vector<int> candidates;
    for (int i = 0; i < static_cast<int>(features.size()); ++i)
        if (!exclude || i != *exclude) candidates.push_back(i);
    if (candidates.empty())
        throw ValidationError("select_references_kmeans: no candidate frames after exclusion");

    RefSelection sel;
    sel.strategy = "kmeans";
    sel.excluded_target = exclude;
    if (static_cast<int>(candidates.size()) <= k) {
        sel.indices = candidates;
        return sel;
    }

    std::vector<std::vector<double>> pts;
    pts.reserve(candidates.size());
    for (int idx : candidates) pts.push_back(features[idx]);
    const KMeansResult km = kmeans_cluster(pts, k, seed);

    const int kk = static_cast<int>(km.centroids.size());
    std::vector<int> rep(kk, -1);
    std::vector<double> rep_d(kk, std::numeric_limits<double>::max());
    for (size_t i = 0; i < pts.size(); ++i) {
        const int c = km.assignments[i];
        const double d = detail::sqdist(pts[i], km.centroids[c]);
        if (d < rep_d[c]) {
            rep_d[c] = d;
            rep[c] = candidates[i];
        }
    }
    for (int c = 0; c < kk; ++c)
        if (rep[c] >= 0) sel.indices.push_back(rep[c]);
    std::sort(sel.indices.begin(), sel.indices.end());
    sel.indices.erase(std::unique(sel.indices.begin(), sel.indices.end()), sel.indices.end());
    sel.validate(k);
    return sel;
}

enum class BaselineStrategy { first, random, uniform };

inline RefSelection select_references_baseline(int n_frames, int k, BaselineStrategy strategy,
                                               uint64_t seed = 0,
                                               std::optional<int> exclude = std::nullopt) {
    if (n_frames < 2) throw ValidationError("select_references_baseline: need at least 2 frames");
    if (k < 1) throw ValidationError("select_references_baseline: k must be >= 1");
    std::vector<int> candidates;
    for (int i = 0; i < n_frames; ++i)
        if (!exclude || i != *exclude) candidates.push_back(i);
    const int m = static_cast<int>(candidates.size());
    const int kk = std::min(k, std::min(m, n_frames - 1));

    RefSelection sel;
    sel.excluded_target = exclude;
    switch (strategy) {
        case BaselineStrategy::first:
            sel.strategy = "first";
            sel.indices.assign(candidates.begin(), candidates.begin() + kk);
            break;
        case BaselineStrategy::uniform: {
            sel.strategy = "uniform";
            for (int j = 0; j < kk; ++j) {
                const int pos =
                    kk == 1 ? 0
                            : static_cast<int>(std::lround(static_cast<double>(j) * (m - 1) / (kk - 1)));
                sel.indices.push_back(candidates[pos]);
            }
            std::sort(sel.indices.begin(), sel.indices.end());
            sel.indices.erase(std::unique(sel.indices.begin(), sel.indices.end()),
                              sel.indices.end());
            break;
        }
        case BaselineStrategy::random: {
            sel.strategy = "random";
            std::mt19937_64 rng(seed);
            std::vector<int> pool = candidates;
            for (int j = 0; j < kk; ++j) {
                std::uniform_int_distribution<int> u(j, m - 1);
                std::swap(pool[j], pool[u(rng)]);
            }
            sel.indices.assign(pool.begin(), pool.begin() + kk);
            std::sort(sel.indices.begin(), sel.indices.end());
            break;
        }
    }
    sel.validate(k);
    return sel;
}

// Mean pairwise euclidean distance between the selected frames' features.
inline double selection_diversity(const std::vector<std::vector<double>>& features,
                                  const std::vector<int>& indices) {
    if (indices.size() < 2) return 0.0;
    double acc = 0.0;
    int cnt = 0;
    for (size_t i = 0; i < indices.size(); ++i)
        for (size_t j = i + 1; j < indices.size(); ++j) {
            acc += std::sqrt(detail::sqdist(features[indices[i]], features[indices[j]]));
            ++cnt;
        }
    return acc / cnt;
}

}  // namespace lipdub
