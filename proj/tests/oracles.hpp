#pragma once

// Straight-line reference implementations used to cross-check the engine.
// Everything here works on plain std::vector<double> and never touches the
// tape, so a bug in the autodiff graph cannot hide in these numbers.

#include <cmath>
#include <cstdint>
#include <vector>

#include "bic/parameters.hpp"

namespace oracle {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;

inline Mat zeros(int n, int m) { return Mat(n, Vec(m, 0.0)); }

inline Mat matmul(const Mat& a, const Mat& b) {
    const int n = static_cast<int>(a.size()), k = static_cast<int>(b.size()),
              m = static_cast<int>(b[0].size());
    Mat c = zeros(n, m);
    for (int i = 0; i < n; ++i)
        for (int p = 0; p < k; ++p)
            for (int j = 0; j < m; ++j) c[i][j] += a[i][p] * b[p][j];
    return c;
}

inline Vec vecmat(const Vec& x, const Mat& w) {
    Vec y(w[0].size(), 0.0);
    for (std::size_t p = 0; p < x.size(); ++p)
        for (std::size_t j = 0; j < y.size(); ++j) y[j] += x[p] * w[p][j];
    return y;
}

inline double dot(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline Vec add(const Vec& a, const Vec& b) {
    Vec c(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) c[i] = a[i] + b[i];
    return c;
}

inline Vec scale(const Vec& a, double s) {
    Vec c(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) c[i] = a[i] * s;
    return c;
}

inline Vec leaky(const Vec& x, double slope) {
    Vec y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0 ? x[i] : slope * x[i];
    return y;
}

inline Vec softmax(const Vec& x, const std::vector<std::uint8_t>* mask = nullptr) {
    double maxv = -1e300;
    for (std::size_t i = 0; i < x.size(); ++i)
        if (!mask || (*mask)[i]) maxv = std::max(maxv, x[i]);
    Vec y(x.size(), 0.0);
    double sum = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!mask || (*mask)[i]) {
            y[i] = std::exp(x[i] - maxv);
            sum += y[i];
        }
    }
    for (auto& v : y) v /= sum;
    return y;
}

// fetch parameter values from the live store into plain buffers
inline Mat fetch_mat(const bic::ParamStoreT<double>& ps, const std::string& name) {
    const auto& t = *ps.by_name(name).tensor;
    Mat m(t.rows(), Vec(t.cols()));
    for (int i = 0; i < t.rows(); ++i)
        for (int j = 0; j < t.cols(); ++j) m[i][j] = t.at(i, j);
    return m;
}

inline Vec fetch_vec(const bic::ParamStoreT<double>& ps, const std::string& name) {
    return ps.by_name(name).tensor->values;
}

struct LayerParams {
    Mat w_q, w_k, w_v, w_o, w_ff1, w_ff2;
    Vec b_q, b_k, b_v, b_o, b_ff1, b_ff2;
    Vec ln1_g, ln1_b, ln2_g, ln2_b;
};

inline LayerParams fetch_layer(const bic::ParamStoreT<double>& ps, const std::string& prefix) {
    LayerParams p;
    p.w_q = fetch_mat(ps, prefix + ".w_q");
    p.w_k = fetch_mat(ps, prefix + ".w_k");
    p.w_v = fetch_mat(ps, prefix + ".w_v");
    p.w_o = fetch_mat(ps, prefix + ".w_o");
    p.b_q = fetch_vec(ps, prefix + ".b_q");
    p.b_k = fetch_vec(ps, prefix + ".b_k");
    p.b_v = fetch_vec(ps, prefix + ".b_v");
    p.b_o = fetch_vec(ps, prefix + ".b_o");
    p.ln1_g = fetch_vec(ps, prefix + ".ln1_g");
    p.ln1_b = fetch_vec(ps, prefix + ".ln1_b");
    p.ln2_g = fetch_vec(ps, prefix + ".ln2_g");
    p.ln2_b = fetch_vec(ps, prefix + ".ln2_b");
    p.w_ff1 = fetch_mat(ps, prefix + ".w_ff1");
    p.b_ff1 = fetch_vec(ps, prefix + ".b_ff1");
    p.w_ff2 = fetch_mat(ps, prefix + ".w_ff2");
    p.b_ff2 = fetch_vec(ps, prefix + ".b_ff2");
    return p;
}

inline Mat add_bias(const Mat& x, const Vec& b) {
    Mat y = x;
    for (auto& r : y)
        for (std::size_t j = 0; j < b.size(); ++j) r[j] += b[j];
    return y;
}

inline Vec layer_norm(const Vec& x, const Vec& g, const Vec& b, double eps = 1e-5) {
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(x.size());
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= static_cast<double>(x.size());
    const double r = 1.0 / std::sqrt(var + eps);
    Vec y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = (x[i] - mean) * r * g[i] + b[i];
    return y;
}

struct AttentionOut {
    Mat output;
    Mat attention;  // head-averaged
};

// Post-norm encoder layer, dropout off. Mirrors the block structure:
// multi-head attention -> residual + layer norm -> feed-forward ->
// residual + layer norm.
inline AttentionOut transformer_layer(const Mat& x, const LayerParams& p, int heads,
                                      const std::vector<std::uint8_t>& col_mask) {
    const int n = static_cast<int>(x.size());
    const int dim = static_cast<int>(x[0].size());
    const int hd = dim / heads;
    const Mat q = add_bias(matmul(x, p.w_q), p.b_q);
    const Mat k = add_bias(matmul(x, p.w_k), p.b_k);
    const Mat v = add_bias(matmul(x, p.w_v), p.b_v);

    Mat attention = zeros(n, n);
    Mat merged = zeros(n, dim);
    for (int h = 0; h < heads; ++h) {
        for (int i = 0; i < n; ++i) {
            Vec scores(n);
            for (int j = 0; j < n; ++j) {
                double s = 0.0;
                for (int c = 0; c < hd; ++c) s += q[i][h * hd + c] * k[j][h * hd + c];
                scores[j] = s / std::sqrt(static_cast<double>(hd));
            }
            const Vec a = softmax(scores, &col_mask);
            for (int j = 0; j < n; ++j) {
                attention[i][j] += a[j] / heads;
                for (int c = 0; c < hd; ++c) merged[i][h * hd + c] += a[j] * v[j][h * hd + c];
            }
        }
    }

    const Mat projected = add_bias(matmul(merged, p.w_o), p.b_o);
    Mat after_attn(n, Vec(dim));
    for (int i = 0; i < n; ++i) after_attn[i] = layer_norm(add(x[i], projected[i]), p.ln1_g, p.ln1_b);

    Mat hidden = add_bias(matmul(after_attn, p.w_ff1), p.b_ff1);
    for (auto& r : hidden)
        for (auto& val : r) val = std::max(val, 0.0);
    const Mat ff = add_bias(matmul(hidden, p.w_ff2), p.b_ff2);
    Mat out(n, Vec(dim));
    for (int i = 0; i < n; ++i) out[i] = layer_norm(add(after_attn[i], ff[i]), p.ln2_g, p.ln2_b);
    return {out, attention};
}

// Dense message passing straight from the edge list:
// out_v = leaky( x_v W_self + sum_r (1/|N_r(v)|) sum_{u -> v in r} x_u W_r ).
inline Mat rgcn(const Mat& x, const std::vector<std::array<int, 3>>& edges, const Mat& w_self,
                const std::vector<Mat>& w_rel, double slope,
                const std::vector<std::uint8_t>& node_live) {
    const int n = static_cast<int>(x.size());
    const int dim = static_cast<int>(x[0].size());
    Mat pre = matmul(x, w_self);
    for (std::size_t r = 0; r < w_rel.size(); ++r) {
        std::vector<int> deg(n, 0);
        for (const auto& e : edges)
            if (e[2] == static_cast<int>(r) && node_live[e[0]] && node_live[e[1]]) ++deg[e[1]];
        Mat msg = zeros(n, dim);
        for (const auto& e : edges) {
            if (e[2] != static_cast<int>(r) || !node_live[e[0]] || !node_live[e[1]]) continue;
            const Vec contrib = vecmat(x[e[0]], w_rel[r]);
            for (int c = 0; c < dim; ++c) msg[e[1]][c] += contrib[c] / deg[e[1]];
        }
        for (int i = 0; i < n; ++i)
            for (int c = 0; c < dim; ++c) pre[i][c] += msg[i][c];
    }
    Mat out(n, Vec(dim));
    for (int i = 0; i < n; ++i) out[i] = leaky(pre[i], slope);
    return out;
}

struct InteractionOut {
    Vec h, g;
    double w_hh, w_hg, w_gg, w_gh;
};

inline InteractionOut similarity_interaction(const Vec& h, const Vec& g, const Mat& theta1,
                                             const Mat& theta2) {
    const Vec t1h = vecmat(h, theta1);
    const Vec t2g = vecmat(g, theta2);
    const Vec pair_h = softmax({dot(h, t1h), dot(h, t2g)});
    const Vec pair_g = softmax({dot(g, t2g), dot(g, t1h)});
    InteractionOut out;
    out.w_hh = pair_h[0];
    out.w_hg = pair_h[1];
    out.w_gg = pair_g[0];
    out.w_gh = pair_g[1];
    out.h = add(scale(h, out.w_hh), scale(g, out.w_hg));
    out.g = add(scale(g, out.w_gg), scale(h, out.w_gh));
    return out;
}

// floor-partition banded max pooling
inline Mat maxpool(const Mat& m, int k) {
    const int n = static_cast<int>(m.size());
    auto band = [&](int b) { return static_cast<int>(static_cast<std::int64_t>(b) * n / k); };
    Mat out = zeros(k, k);
    for (int bi = 0; bi < k; ++bi)
        for (int bj = 0; bj < k; ++bj) {
            double best = -1e300;
            for (int i = band(bi); i < band(bi + 1); ++i)
                for (int j = band(bj); j < band(bj + 1); ++j) best = std::max(best, m[i][j]);
            out[bi][bj] = best;
        }
    return out;
}

inline Vec flatten(const Mat& m) {
    Vec v;
    for (const auto& r : m) v.insert(v.end(), r.begin(), r.end());
    return v;
}

// Symmetric eigenvalues via the cyclic Jacobi method; the dense
// decomposition oracle for the power-iteration implementation.
inline Vec jacobi_eigenvalues(Mat a, int sweeps = 64) {
    const int n = static_cast<int>(a.size());
    for (int s = 0; s < sweeps; ++s) {
        double off = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) off += a[i][j] * a[i][j];
        if (off < 1e-24) break;
        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                if (std::abs(a[p][q]) < 1e-18) continue;
                const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double sn = t * c;
                for (int i = 0; i < n; ++i) {
                    const double aip = a[i][p], aiq = a[i][q];
                    a[i][p] = c * aip - sn * aiq;
                    a[i][q] = sn * aip + c * aiq;
                }
                for (int i = 0; i < n; ++i) {
                    const double api = a[p][i], aqi = a[q][i];
                    a[p][i] = c * api - sn * aqi;
                    a[q][i] = sn * api + c * aqi;
                }
            }
        }
    }
    Vec eig(n);
    for (int i = 0; i < n; ++i) eig[i] = a[i][i];
    return eig;
}

}  // namespace oracle
