#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "dfm/common.hpp"
#include "dfm/rng.hpp"

namespace dfm {

/// MLP velocity field v(x_t, t, y). Input features are the concatenation
/// [x_t, Fourier time features, class embedding]; hidden layers use the
/// sigmoid-weighted linear unit; the output layer is linear.
///
/// Parameter layout (one flat double vector):
///   embedding table, class_embed_dim x (num_classes+1), column-major
///   then per layer: weight matrix (out x in, column-major), then bias.
/// Column num_classes of the embedding table is the reserved null class.
struct VelocityField {
    int input_dim = 0;
    std::vector<int> hidden_dims;
    int num_classes = 0;
    int time_features = 0;   // count of sin/cos frequency pairs
    int class_embed_dim = 0;
    Vec parameters;

    int null_class() const { return num_classes; }
    int feature_dim() const { return input_dim + 2 * time_features + class_embed_dim; }

    int num_layers() const { return static_cast<int>(hidden_dims.size()) + 1; }

    int layer_in(int l) const {
        return l == 0 ? feature_dim() : hidden_dims[static_cast<std::size_t>(l) - 1];
    }
    int layer_out(int l) const {
        return l == num_layers() - 1 ? input_dim : hidden_dims[static_cast<std::size_t>(l)];
    }

    std::ptrdiff_t embed_count() const {
        return static_cast<std::ptrdiff_t>(class_embed_dim) * (num_classes + 1);
    }
    std::ptrdiff_t weight_offset(int l) const {
        std::ptrdiff_t off = embed_count();
        for (int k = 0; k < l; ++k)
            off += static_cast<std::ptrdiff_t>(layer_out(k)) * layer_in(k) + layer_out(k);
        return off;
    }
    std::ptrdiff_t bias_offset(int l) const {
        return weight_offset(l) + static_cast<std::ptrdiff_t>(layer_out(l)) * layer_in(l);
    }
    std::ptrdiff_t param_count() const {
        return bias_offset(num_layers() - 1) + layer_out(num_layers() - 1);
    }

    Eigen::Map<const Mat> embedding() const {
        return {parameters.data(), class_embed_dim, num_classes + 1};
    }
    Eigen::Map<const Mat> weight(int l) const {
        return {parameters.data() + weight_offset(l), layer_out(l), layer_in(l)};
    }
    Eigen::Map<const Vec> bias(int l) const {
        return {parameters.data() + bias_offset(l), layer_out(l)};
    }
};

inline VelocityField init(int input_dim, std::vector<int> hidden_dims, int num_classes,
                          int time_features, int class_embed_dim, std::uint64_t seed) {
    require(input_dim >= 1, "init: input_dim must be >= 1");
    require(num_classes >= 1, "init: num_classes must be >= 1");
    require(time_features >= 1, "init: time_features must be >= 1");
    require(class_embed_dim >= 1, "init: class_embed_dim must be >= 1");
    for (int h : hidden_dims) require(h >= 1, "init: hidden width must be >= 1");

    VelocityField m;
    m.input_dim = input_dim;
    m.hidden_dims = std::move(hidden_dims);
    m.num_classes = num_classes;
    m.time_features = time_features;
    m.class_embed_dim = class_embed_dim;
    m.parameters = Vec::Zero(m.param_count());

    Rng rng(seed);
    double* p = m.parameters.data();
    for (std::ptrdiff_t i = 0; i < m.embed_count(); ++i) p[i] = rng.uniform(-1.0, 1.0);
    for (int l = 0; l < m.num_layers(); ++l) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(m.layer_in(l)));
        double* w = p + m.weight_offset(l);
        const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(m.layer_out(l)) * m.layer_in(l);
        for (std::ptrdiff_t i = 0; i < n; ++i) w[i] = rng.uniform(-bound, bound);
        // biases stay zero
    }
    return m;
}

/// Scratch buffers for batched evaluation; reusable across calls with the
/// same model shape. Not safe for concurrent use.
struct Workspace {
    Mat X;                // feature_dim x N
    std::vector<Mat> Z;   // pre-activations per hidden layer
    std::vector<Mat> S;   // sigmoid(Z), cached for the backward pass
    std::vector<Mat> H;   // activations per hidden layer
    Mat out;              // input_dim x N
    std::vector<Mat> GZ;  // backward scratch
    Mat tmp;
    Vec grad;

    void prepare(const VelocityField& m, int n) {
        const std::size_t hl = m.hidden_dims.size();
        X.resize(m.feature_dim(), n);
        Z.resize(hl);
        S.resize(hl);
        H.resize(hl);
        GZ.resize(hl + 1);
        for (std::size_t l = 0; l < hl; ++l) {
            Z[l].resize(m.hidden_dims[l], n);
            S[l].resize(m.hidden_dims[l], n);
            H[l].resize(m.hidden_dims[l], n);
        }
        out.resize(m.input_dim, n);
    }
};

namespace detail {

inline void fill_features(const VelocityField& m, Mat& X, int col, const double* x_t,
                          double t, int y) {
    require(y >= 0 && y <= m.num_classes, "forward: label out of range");
    double* dst = X.data() + static_cast<std::ptrdiff_t>(col) * X.rows();
    for (int i = 0; i < m.input_dim; ++i) dst[i] = x_t[i];
    double omega = std::numbers::pi;
    for (int k = 0; k < m.time_features; ++k) {
        dst[m.input_dim + 2 * k] = std::sin(omega * t);
        dst[m.input_dim + 2 * k + 1] = std::cos(omega * t);
        omega *= 2.0;
    }
    const double* emb = m.parameters.data() +
                        static_cast<std::ptrdiff_t>(y) * m.class_embed_dim;
    for (int i = 0; i < m.class_embed_dim; ++i)
        dst[m.input_dim + 2 * m.time_features + i] = emb[i];
}

inline void run_layers(const VelocityField& m, Workspace& ws) {
    const int L = m.num_layers();
    const Mat* cur = &ws.X;
    for (int l = 0; l + 1 < L; ++l) {
        ws.Z[l].noalias() = m.weight(l) * (*cur);
        ws.Z[l].colwise() += m.bias(l);
        ws.S[l] = (1.0 + (-ws.Z[l].array()).exp()).inverse().matrix();
        ws.H[l] = (ws.Z[l].array() * ws.S[l].array()).matrix();
        cur = &ws.H[l];
    }
    ws.out.noalias() = m.weight(L - 1) * (*cur);
    ws.out.colwise() += m.bias(L - 1);
}

}  // namespace detail

/// Batched forward pass: columns of x_t are states, t[i]/y[i] the matching
/// time and label. Returns ws.out (input_dim x N).
inline const Mat& forward_batch(const VelocityField& m, Workspace& ws, const Mat& x_t,
                                const std::vector<double>& t, const std::vector<int>& y) {
    const int n = static_cast<int>(x_t.cols());
    require(n >= 1, "forward_batch: empty batch");
    require(x_t.rows() == m.input_dim, "forward_batch: state dimension mismatch");
    require(static_cast<int>(t.size()) == n && static_cast<int>(y.size()) == n,
            "forward_batch: t/y length mismatch");
    ws.prepare(m, n);
    for (int i = 0; i < n; ++i)
        detail::fill_features(m, ws.X, i, x_t.data() + static_cast<std::ptrdiff_t>(i) * m.input_dim,
                              t[i], y[i]);
    detail::run_layers(m, ws);
    return ws.out;
}

inline Vec forward(const VelocityField& m, const Vec& x_t, double t, int y) {
    Workspace ws;
    Mat X(m.input_dim, 1);
    X.col(0) = x_t;
    forward_batch(m, ws, X, {t}, {y});
    return ws.out.col(0);
}

struct GradientTape {
    Vec gradient;  // aligned with VelocityField::parameters
    double loss = 0.0;
};

/// Runs the batched forward pass, lets the objective closure turn outputs
/// into a scalar loss plus dloss/doutput, then back-propagates exactly.
/// The closure signature is double(const Mat& out, Mat& g_out); g_out arrives
/// zero-sized and must be resized/filled by the closure.
template <typename ObjectiveFn>
GradientTape loss_and_gradient(const VelocityField& m, Workspace& ws, const Mat& x_t,
                               const std::vector<double>& t, const std::vector<int>& y,
                               ObjectiveFn&& objective) {
    const int n = static_cast<int>(x_t.cols());
    forward_batch(m, ws, x_t, t, y);

    GradientTape tape;
    Mat g_out;
    tape.loss = objective(static_cast<const Mat&>(ws.out), g_out);
    require(g_out.rows() == m.input_dim && g_out.cols() == n,
            "loss_and_gradient: objective returned wrong gradient shape");

    ws.grad = Vec::Zero(m.param_count());
    const int L = m.num_layers();

    // output layer
    {
        const Mat& input = (L == 1) ? ws.X : ws.H[static_cast<std::size_t>(L) - 2];
        Eigen::Map<Mat> dW(ws.grad.data() + m.weight_offset(L - 1), m.layer_out(L - 1),
                           m.layer_in(L - 1));
        Eigen::Map<Vec> db(ws.grad.data() + m.bias_offset(L - 1), m.layer_out(L - 1));
        dW.noalias() = g_out * input.transpose();
        db = g_out.rowwise().sum();
        ws.GZ[static_cast<std::size_t>(L) - 1].noalias() = m.weight(L - 1).transpose() * g_out;
    }
    // hidden layers, from the top down; GZ[l+1] holds dL/dH_l on entry
    for (int l = L - 2; l >= 0; --l) {
        const std::size_t ul = static_cast<std::size_t>(l);
        // d silu(z) = s(z) * (1 + z * (1 - s(z)))
        Mat& gz = ws.GZ[ul];
        gz = (ws.GZ[ul + 1].array() *
              (ws.S[ul].array() * (1.0 + ws.Z[ul].array() * (1.0 - ws.S[ul].array()))))
                 .matrix();
        const Mat& input = (l == 0) ? ws.X : ws.H[ul - 1];
        Eigen::Map<Mat> dW(ws.grad.data() + m.weight_offset(l), m.layer_out(l), m.layer_in(l));
        Eigen::Map<Vec> db(ws.grad.data() + m.bias_offset(l), m.layer_out(l));
        dW.noalias() = gz * input.transpose();
        db = gz.rowwise().sum();
        if (l == 0) {
            // feature gradient: only the embedding rows carry parameters
            ws.tmp.noalias() = m.weight(0).transpose() * gz;
            Eigen::Map<Mat> dEmb(ws.grad.data(), m.class_embed_dim, m.num_classes + 1);
            const int row0 = m.input_dim + 2 * m.time_features;
            for (int i = 0; i < n; ++i)
                dEmb.col(y[static_cast<std::size_t>(i)]) +=
                    ws.tmp.block(row0, i, m.class_embed_dim, 1);
        } else {
            ws.tmp.noalias() = m.weight(l).transpose() * gz;
            ws.GZ[ul].swap(ws.tmp);  // dL/dH_{l-1} for the next iteration
        }
    }
    if (L == 1) {
        // no hidden layers: embedding gradient comes straight off the output layer
        Mat gx;
        gx.noalias() = m.weight(0).transpose() * g_out;
        Eigen::Map<Mat> dEmb(ws.grad.data(), m.class_embed_dim, m.num_classes + 1);
        const int row0 = m.input_dim + 2 * m.time_features;
        for (int i = 0; i < n; ++i)
            dEmb.col(y[static_cast<std::size_t>(i)]) += gx.block(row0, i, m.class_embed_dim, 1);
    }

    tape.gradient = ws.grad;
    return tape;
}

}  // namespace dfm
