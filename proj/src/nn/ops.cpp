#include "awrkit/nn/ops.hpp"

#include <cmath>
#include <memory>

#include <Eigen/Core>

#include "awrkit/error.hpp"

namespace awrkit::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

void require(bool ok, const std::string& what) {
    if (!ok) throw ShapeError(what);
}

struct ConvGeom {
    int n, c, h, w, co, k, stride, pad, ho, wo;
    std::size_t rows() const { return static_cast<std::size_t>(c) * k * k; }
    std::size_t cols() const { return static_cast<std::size_t>(n) * ho * wo; }
};

// cols(ci*k*k + ky*k + kx, n*ho*wo + oy*wo + ox) = x[n, ci, oy*s + ky - p, ox*s + kx - p]
void im2col(const double* x, const ConvGeom& g, double* cols) {
    const std::size_t ncols = g.cols();
    const int plane = g.ho * g.wo;
    for (int ci = 0; ci < g.c; ++ci) {
        for (int ky = 0; ky < g.k; ++ky) {
            for (int kx = 0; kx < g.k; ++kx) {
                double* row = cols + ((static_cast<std::size_t>(ci) * g.k + ky) * g.k + kx) * ncols;
                for (int b = 0; b < g.n; ++b) {
                    const double* src = x + (static_cast<std::size_t>(b) * g.c + ci) * g.h * g.w;
                    double* dst = row + static_cast<std::size_t>(b) * plane;
                    for (int oy = 0; oy < g.ho; ++oy) {
                        const int iy = oy * g.stride + ky - g.pad;
                        for (int ox = 0; ox < g.wo; ++ox) {
                            const int ix = ox * g.stride + kx - g.pad;
                            dst[oy * g.wo + ox] =
                                (iy >= 0 && iy < g.h && ix >= 0 && ix < g.w) ? src[iy * g.w + ix] : 0.0;
                        }
                    }
                }
            }
        }
    }
}

void col2im_add(const double* cols, const ConvGeom& g, double* dx) {
    const std::size_t ncols = g.cols();
    const int plane = g.ho * g.wo;
    for (int ci = 0; ci < g.c; ++ci) {
        for (int ky = 0; ky < g.k; ++ky) {
            for (int kx = 0; kx < g.k; ++kx) {
                const double* row = cols + ((static_cast<std::size_t>(ci) * g.k + ky) * g.k + kx) * ncols;
                for (int b = 0; b < g.n; ++b) {
                    double* dst = dx + (static_cast<std::size_t>(b) * g.c + ci) * g.h * g.w;
                    const double* src = row + static_cast<std::size_t>(b) * plane;
                    for (int oy = 0; oy < g.ho; ++oy) {
                        const int iy = oy * g.stride + ky - g.pad;
                        if (iy < 0 || iy >= g.h) continue;
                        for (int ox = 0; ox < g.wo; ++ox) {
                            const int ix = ox * g.stride + kx - g.pad;
                            if (ix >= 0 && ix < g.w) dst[iy * g.w + ix] += src[oy * g.wo + ox];
                        }
                    }
                }
            }
        }
    }
}

Tensor weighted_mask(const Tensor* weights, const Tensor& like, const char* op) {
    if (!weights) return Tensor(like.shape(), 1.0);
    require(weights->same_shape(like), std::string(op) + ": weight shape " + shape_string(weights->shape()) +
                                           " differs from " + shape_string(like.shape()));
    return *weights;
}

} // namespace

Var conv2d(Var input, Var kernel, Var bias, int stride, int padding) {
    Tape& tape = *input.tape;
    const Tensor& x = input.value();
    const Tensor& w = kernel.value();
    const Tensor& b = bias.value();
    require(x.rank() == 4, "conv2d: input must be N x C x H x W, got " + shape_string(x.shape()));
    require(w.rank() == 4 && w.dim(2) == w.dim(3), "conv2d: kernel must be Co x C x K x K");
    require(w.dim(1) == x.dim(1), "conv2d: kernel expects " + std::to_string(w.dim(1)) + " input channels, got " +
                                      std::to_string(x.dim(1)));
    require(b.rank() == 1 && b.dim(0) == w.dim(0), "conv2d: bias must have Co entries");
    require(stride >= 1 && padding >= 0, "conv2d: stride must be >= 1 and padding >= 0");

    ConvGeom g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0), w.dim(2), stride, padding, 0, 0};
    require(g.h + 2 * padding >= g.k && g.w + 2 * padding >= g.k, "conv2d: kernel larger than padded input");
    g.ho = (g.h + 2 * padding - g.k) / stride + 1;
    g.wo = (g.w + 2 * padding - g.k) / stride + 1;

    auto cols = std::make_shared<std::vector<double>>(g.rows() * g.cols());
    im2col(x.data(), g, cols->data());

    RowMat out_mat = ConstMapMat(w.data(), g.co, static_cast<Eigen::Index>(g.rows())) *
                     ConstMapMat(cols->data(), static_cast<Eigen::Index>(g.rows()), static_cast<Eigen::Index>(g.cols()));
    Tensor out({g.n, g.co, g.ho, g.wo});
    const int plane = g.ho * g.wo;
    for (int n = 0; n < g.n; ++n)
        for (int o = 0; o < g.co; ++o) {
            double* dst = out.data() + (static_cast<std::size_t>(n) * g.co + o) * plane;
            const double* src = out_mat.data() + static_cast<std::size_t>(o) * g.cols() + static_cast<std::size_t>(n) * plane;
            for (int p = 0; p < plane; ++p) dst[p] = src[p] + b[static_cast<std::size_t>(o)];
        }

    const int xi = input.id, wi = kernel.id, bi = bias.id;
    return tape.record(
        std::move(out), {xi, wi, bi},
        [g, cols, xi, wi, bi](Tape& t, int self) {
            const Tensor& gy = t.grad(self);
            const int plane = g.ho * g.wo;
            RowMat gmat(g.co, static_cast<Eigen::Index>(g.cols()));
            for (int n = 0; n < g.n; ++n)
                for (int o = 0; o < g.co; ++o) {
                    const double* src = gy.data() + (static_cast<std::size_t>(n) * g.co + o) * plane;
                    double* dst = gmat.data() + static_cast<std::size_t>(o) * g.cols() + static_cast<std::size_t>(n) * plane;
                    for (int p = 0; p < plane; ++p) dst[p] = src[p];
                }
            const ConstMapMat colmat(cols->data(), static_cast<Eigen::Index>(g.rows()),
                                     static_cast<Eigen::Index>(g.cols()));
            if (t.requires_grad(wi)) {
                MapMat gw(t.grad(wi).data(), g.co, static_cast<Eigen::Index>(g.rows()));
                gw.noalias() += gmat * colmat.transpose();
            }
            if (t.requires_grad(bi)) {
                Tensor& gb = t.grad(bi);
                for (int o = 0; o < g.co; ++o) gb[static_cast<std::size_t>(o)] += gmat.row(o).sum();
            }
            if (t.requires_grad(xi)) {
                const ConstMapMat wmat(t.value(wi).data(), g.co, static_cast<Eigen::Index>(g.rows()));
                RowMat gcols = wmat.transpose() * gmat;
                col2im_add(gcols.data(), g, t.grad(xi).data());
            }
        },
        "conv2d");
}

Var upsample2x(Var input) {
    const Tensor& x = input.value();
    require(x.rank() >= 2, "upsample2x: input needs at least two axes");
    const int h = x.dim(x.rank() - 2), w = x.dim(x.rank() - 1);
    const std::size_t planes = x.size() / (static_cast<std::size_t>(h) * w);
    Shape shape = x.shape();
    shape[shape.size() - 2] = 2 * h;
    shape[shape.size() - 1] = 2 * w;
    Tensor out(shape);
    for (std::size_t p = 0; p < planes; ++p) {
        const double* src = x.data() + p * h * w;
        double* dst = out.data() + p * 4 * h * w;
        for (int y = 0; y < 2 * h; ++y)
            for (int xx = 0; xx < 2 * w; ++xx) dst[y * 2 * w + xx] = src[(y / 2) * w + xx / 2];
    }
    const int xi = input.id;
    return input.tape->record(
        std::move(out), {xi},
        [xi, planes, h, w](Tape& t, int self) {
            const Tensor& gy = t.grad(self);
            Tensor& gx = t.grad(xi);
            for (std::size_t p = 0; p < planes; ++p) {
                const double* src = gy.data() + p * 4 * h * w;
                double* dst = gx.data() + p * h * w;
                for (int y = 0; y < 2 * h; ++y)
                    for (int xx = 0; xx < 2 * w; ++xx) dst[(y / 2) * w + xx / 2] += src[y * 2 * w + xx];
            }
        },
        "upsample2x");
}

Var leaky_relu(Var x, double slope) {
    const Tensor& v = x.value();
    Tensor out(v.shape());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] > 0.0 ? v[i] : slope * v[i];
    const int xi = x.id;
    return x.tape->record(
        std::move(out), {xi},
        [xi, slope](Tape& t, int self) {
            const Tensor& in = t.value(xi);
            const Tensor& gy = t.grad(self);
            Tensor& gx = t.grad(xi);
            for (std::size_t i = 0; i < in.size(); ++i) gx[i] += in[i] > 0.0 ? gy[i] : slope * gy[i];
        },
        "leaky_relu");
}

Var add(Var a, Var b) {
    require(a.value().same_shape(b.value()), "add: shape mismatch " + shape_string(a.shape()) + " vs " +
                                                 shape_string(b.shape()));
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
    const int ai = a.id, bi = b.id;
    return a.tape->record(
        std::move(out), {ai, bi},
        [ai, bi](Tape& t, int self) {
            const Tensor& gy = t.grad(self);
            for (int id : {ai, bi}) {
                if (!t.requires_grad(id)) continue;
                Tensor& g = t.grad(id);
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i];
            }
        },
        "add");
}

Var mul(Var a, Var b) {
    require(a.value().same_shape(b.value()), "mul: shape mismatch " + shape_string(a.shape()) + " vs " +
                                                 shape_string(b.shape()));
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
    const int ai = a.id, bi = b.id;
    return a.tape->record(
        std::move(out), {ai, bi},
        [ai, bi](Tape& t, int self) {
            const Tensor& gy = t.grad(self);
            const Tensor& va = t.value(ai);
            const Tensor& vb = t.value(bi);
            if (t.requires_grad(ai)) {
                Tensor& g = t.grad(ai);
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i] * vb[i];
            }
            if (t.requires_grad(bi)) {
                Tensor& g = t.grad(bi);
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i] * va[i];
            }
        },
        "mul");
}

Var scale(Var a, double factor) {
    Tensor out = a.value();
    for (auto& v : out.values()) v *= factor;
    const int ai = a.id;
    return a.tape->record(
        std::move(out), {ai},
        [ai, factor](Tape& t, int self) {
            const Tensor& gy = t.grad(self);
            Tensor& g = t.grad(ai);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * gy[i];
        },
        "scale");
}

Var sum(Var a) {
    double s = 0.0;
    for (double v : a.value().values()) s += v;
    const int ai = a.id;
    return a.tape->record(
        Tensor({1}, {s}), {ai},
        [ai](Tape& t, int self) {
            const double gy = t.grad(self)[0];
            Tensor& g = t.grad(ai);
            for (auto& v : g.values()) v += gy;
        },
        "sum");
}

Var smooth_l1(Var pred, const Tensor& target, double delta, const Tensor* weights) {
    const Tensor& p = pred.value();
    require(p.same_shape(target), "smooth_l1: prediction " + shape_string(p.shape()) + " vs target " +
                                      shape_string(target.shape()));
    require(delta > 0.0, "smooth_l1: delta must be positive");
    auto w = std::make_shared<Tensor>(weighted_mask(weights, p, "smooth_l1"));
    double total_w = 0.0, loss = 0.0;
    auto dldp = std::make_shared<Tensor>(p.shape());
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double wi = (*w)[i];
        total_w += wi;
        const double x = p[i] - target[i];
        if (std::abs(x) < delta) {
            loss += wi * 0.5 * x * x / delta;
            (*dldp)[i] = wi * x / delta;
        } else {
            loss += wi * (std::abs(x) - 0.5 * delta);
            (*dldp)[i] = wi * (x > 0.0 ? 1.0 : -1.0);
        }
    }
    const double inv = total_w > 0.0 ? 1.0 / total_w : 0.0;
    const int pi = pred.id;
    return pred.tape->record(
        Tensor({1}, {loss * inv}), {pi},
        [pi, dldp, inv](Tape& t, int self) {
            const double gy = t.grad(self)[0] * inv;
            Tensor& g = t.grad(pi);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy * (*dldp)[i];
        },
        "smooth_l1");
}

Var l2_loss(Var pred, const Tensor& target, const Tensor* weights) {
    const Tensor& p = pred.value();
    require(p.same_shape(target), "l2_loss: prediction " + shape_string(p.shape()) + " vs target " +
                                      shape_string(target.shape()));
    auto w = std::make_shared<Tensor>(weighted_mask(weights, p, "l2_loss"));
    double total_w = 0.0, loss = 0.0;
    auto dldp = std::make_shared<Tensor>(p.shape());
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double x = p[i] - target[i];
        total_w += (*w)[i];
        loss += (*w)[i] * x * x;
        (*dldp)[i] = 2.0 * (*w)[i] * x;
    }
    const double inv = total_w > 0.0 ? 1.0 / total_w : 0.0;
    const int pi = pred.id;
    return pred.tape->record(
        Tensor({1}, {loss * inv}), {pi},
        [pi, dldp, inv](Tape& t, int self) {
            const double gy = t.grad(self)[0] * inv;
            Tensor& g = t.grad(pi);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy * (*dldp)[i];
        },
        "l2_loss");
}

} // namespace awrkit::nn
