#include "rffi/cnn.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>

#include "rffi/errors.hpp"
#include "rffi/random.hpp"

namespace rffi {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

template <typename T>
void he_uniform(std::vector<T>& w, std::size_t fan_in, Rng& rng)
{
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (T& v : w) {
        v = static_cast<T>(rng.uniform(-limit, limit));
    }
}

template <typename T>
Conv2d<T> make_conv(std::size_t in_c, std::size_t out_c, Rng& rng)
{
    Conv2d<T> conv;
    conv.in_channels = in_c;
    conv.out_channels = out_c;
    const std::size_t fan_in = in_c * conv.kernel * conv.kernel;
    conv.weight.resize(out_c * fan_in);
    conv.bias.assign(out_c, T{});
    he_uniform(conv.weight, fan_in, rng);
    conv.grad_weight.assign(conv.weight.size(), T{});
    conv.grad_bias.assign(out_c, T{});
    return conv;
}

template <typename T>
BatchNorm2d<T> make_bn(std::size_t channels)
{
    BatchNorm2d<T> bn;
    bn.channels = channels;
    bn.gamma.assign(channels, T(1));
    bn.beta.assign(channels, T(0));
    bn.running_mean.assign(channels, T(0));
    bn.running_var.assign(channels, T(1));
    bn.grad_gamma.assign(channels, T(0));
    bn.grad_beta.assign(channels, T(0));
    return bn;
}

template <typename T>
Dense<T> make_dense(std::size_t in, std::size_t out, Rng& rng)
{
    Dense<T> d;
    d.in_features = in;
    d.out_features = out;
    d.weight.resize(in * out);
    d.bias.assign(out, T{});
    he_uniform(d.weight, in, rng);
    d.grad_weight.assign(d.weight.size(), T{});
    d.grad_bias.assign(out, T{});
    return d;
}

}  // namespace

// ---------------------------------------------------------------- Conv2d

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x, Mode mode)
{
    require(x.c == in_channels, "conv input channel mismatch");
    require(x.h >= kernel && x.w >= kernel, "conv input smaller than kernel");
    in_h = x.h;
    in_w = x.w;
    const std::size_t oh = x.h - kernel + 1;
    const std::size_t ow = x.w - kernel + 1;
    const std::size_t patch = in_channels * kernel * kernel;
    const std::size_t spatial = oh * ow;

    Tensor<T> y(x.n, out_channels, oh, ow);
    std::vector<T> local;
    if (mode == Mode::kTrain) {
        cols.assign(x.n * patch * spatial, T{});
    } else {
        local.assign(patch * spatial, T{});
    }
    ConstMapMat<T> w(weight.data(), static_cast<Eigen::Index>(out_channels), static_cast<Eigen::Index>(patch));
    for (std::size_t s = 0; s < x.n; ++s) {
        T* col = mode == Mode::kTrain ? cols.data() + s * patch * spatial : local.data();
        const T* in = x.data.data() + s * x.sample_size();
        for (std::size_t ci = 0; ci < in_channels; ++ci) {
            for (std::size_t ky = 0; ky < kernel; ++ky) {
                for (std::size_t kx = 0; kx < kernel; ++kx) {
                    T* dst = col + ((ci * kernel + ky) * kernel + kx) * spatial;
                    for (std::size_t oy = 0; oy < oh; ++oy) {
                        const T* src = in + (ci * x.h + oy + ky) * x.w + kx;
                        std::copy(src, src + ow, dst + oy * ow);
                    }
                }
            }
        }
        ConstMapMat<T> c(col, static_cast<Eigen::Index>(patch), static_cast<Eigen::Index>(spatial));
        MapMat<T> out(y.data.data() + s * y.sample_size(), static_cast<Eigen::Index>(out_channels),
                      static_cast<Eigen::Index>(spatial));
        out.noalias() = w * c;
        for (std::size_t co = 0; co < out_channels; ++co) {
            out.row(static_cast<Eigen::Index>(co)).array() += bias[co];
        }
    }
    return y;
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& grad_out)
{
    const std::size_t oh = grad_out.h;
    const std::size_t ow = grad_out.w;
    const std::size_t patch = in_channels * kernel * kernel;
    const std::size_t spatial = oh * ow;
    require(cols.size() == grad_out.n * patch * spatial, "conv backward without a training forward pass");

    Tensor<T> grad_in;
    if (needs_input_grad) {
        grad_in = Tensor<T>(grad_out.n, in_channels, in_h, in_w);
    }
    MapMat<T> gw(grad_weight.data(), static_cast<Eigen::Index>(out_channels), static_cast<Eigen::Index>(patch));
    ConstMapMat<T> w(weight.data(), static_cast<Eigen::Index>(out_channels), static_cast<Eigen::Index>(patch));
    RowMat<T> dcol;
    for (std::size_t s = 0; s < grad_out.n; ++s) {
        ConstMapMat<T> go(grad_out.data.data() + s * grad_out.sample_size(), static_cast<Eigen::Index>(out_channels),
                          static_cast<Eigen::Index>(spatial));
        ConstMapMat<T> c(cols.data() + s * patch * spatial, static_cast<Eigen::Index>(patch),
                         static_cast<Eigen::Index>(spatial));
        gw.noalias() += go * c.transpose();
        // Plain loops: Eigen's vectorized reductions depend on pointer
        // alignment, which would make the rounding vary between runs.
        const T* g = grad_out.data.data() + s * grad_out.sample_size();
        for (std::size_t co = 0; co < out_channels; ++co) {
            T acc{};
            for (std::size_t i = 0; i < spatial; ++i) acc += g[co * spatial + i];
            grad_bias[co] += acc;
        }
        if (!needs_input_grad) {
            continue;
        }
        dcol.noalias() = w.transpose() * go;
        T* gin = grad_in.data.data() + s * grad_in.sample_size();
        for (std::size_t ci = 0; ci < in_channels; ++ci) {
            for (std::size_t ky = 0; ky < kernel; ++ky) {
                for (std::size_t kx = 0; kx < kernel; ++kx) {
                    const T* src = dcol.data() + ((ci * kernel + ky) * kernel + kx) * spatial;
                    for (std::size_t oy = 0; oy < oh; ++oy) {
                        T* dst = gin + (ci * in_h + oy + ky) * in_w + kx;
                        const T* row = src + oy * ow;
                        for (std::size_t ox = 0; ox < ow; ++ox) {
                            dst[ox] += row[ox];
                        }
                    }
                }
            }
        }
    }
    return grad_in;
}

// ------------------------------------------------------------ BatchNorm2d

template <typename T>
Tensor<T> BatchNorm2d<T>::forward(const Tensor<T>& x, Mode mode)
{
    require(x.c == channels, "batchnorm channel mismatch");
    const std::size_t hw = x.h * x.w;
    Tensor<T> y(x.n, x.c, x.h, x.w);
    if (mode == Mode::kInfer) {
        for (std::size_t ch = 0; ch < channels; ++ch) {
            const double scale = gamma[ch] / std::sqrt(static_cast<double>(running_var[ch]) + eps);
            const double shift = beta[ch] - scale * running_mean[ch];
            for (std::size_t s = 0; s < x.n; ++s) {
                const T* in = x.data.data() + (s * channels + ch) * hw;
                T* out = y.data.data() + (s * channels + ch) * hw;
                for (std::size_t i = 0; i < hw; ++i) {
                    out[i] = static_cast<T>(scale * in[i] + shift);
                }
            }
        }
        return y;
    }

    cached_n = x.n;
    cached_hw = hw;
    x_hat.assign(x.data.size(), T{});
    inv_std.assign(channels, T{});
    const double count = static_cast<double>(x.n * hw);
    for (std::size_t ch = 0; ch < channels; ++ch) {
        double sum = 0.0;
        for (std::size_t s = 0; s < x.n; ++s) {
            const T* in = x.data.data() + (s * channels + ch) * hw;
            for (std::size_t i = 0; i < hw; ++i) sum += in[i];
        }
        const double mean = sum / count;
        double sq = 0.0;
        for (std::size_t s = 0; s < x.n; ++s) {
            const T* in = x.data.data() + (s * channels + ch) * hw;
            for (std::size_t i = 0; i < hw; ++i) {
                const double d = in[i] - mean;
                sq += d * d;
            }
        }
        const double var = sq / count;
        const double istd = 1.0 / std::sqrt(var + eps);
        inv_std[ch] = static_cast<T>(istd);
        for (std::size_t s = 0; s < x.n; ++s) {
            const std::size_t off = (s * channels + ch) * hw;
            for (std::size_t i = 0; i < hw; ++i) {
                const double xh = (x.data[off + i] - mean) * istd;
                x_hat[off + i] = static_cast<T>(xh);
                y.data[off + i] = static_cast<T>(gamma[ch] * xh + beta[ch]);
            }
        }
        const double unbiased = count > 1.0 ? var * count / (count - 1.0) : var;
        running_mean[ch] = static_cast<T>(momentum * running_mean[ch] + (1.0 - momentum) * mean);
        running_var[ch] = static_cast<T>(momentum * running_var[ch] + (1.0 - momentum) * unbiased);
    }
    return y;
}

template <typename T>
Tensor<T> BatchNorm2d<T>::backward(const Tensor<T>& grad_out)
{
    require(x_hat.size() == grad_out.data.size(), "batchnorm backward without a training forward pass");
    const std::size_t hw = cached_hw;
    const double count = static_cast<double>(cached_n * hw);
    Tensor<T> grad_in(grad_out.n, grad_out.c, grad_out.h, grad_out.w);
    for (std::size_t ch = 0; ch < channels; ++ch) {
        double sum_dy = 0.0;
        double sum_dy_xh = 0.0;
        for (std::size_t s = 0; s < cached_n; ++s) {
            const std::size_t off = (s * channels + ch) * hw;
            for (std::size_t i = 0; i < hw; ++i) {
                sum_dy += grad_out.data[off + i];
                sum_dy_xh += static_cast<double>(grad_out.data[off + i]) * x_hat[off + i];
            }
        }
        grad_gamma[ch] += static_cast<T>(sum_dy_xh);
        grad_beta[ch] += static_cast<T>(sum_dy);
        const double g = gamma[ch];
        const double istd = inv_std[ch];
        for (std::size_t s = 0; s < cached_n; ++s) {
            const std::size_t off = (s * channels + ch) * hw;
            for (std::size_t i = 0; i < hw; ++i) {
                const double dxh = grad_out.data[off + i] * g;
                grad_in.data[off + i] = static_cast<T>(
                    istd / count * (count * dxh - g * sum_dy - x_hat[off + i] * g * sum_dy_xh));
            }
        }
    }
    return grad_in;
}

// ------------------------------------------------------------------ Relu

template <typename T>
Tensor<T> Relu<T>::forward(const Tensor<T>& x, Mode mode)
{
    Tensor<T> y = x;
    if (mode == Mode::kTrain) {
        active.assign(x.data.size(), 0);
    }
    for (std::size_t i = 0; i < y.data.size(); ++i) {
        const bool on = y.data[i] > T(0);
        if (!on) y.data[i] = T(0);
        if (mode == Mode::kTrain) active[i] = on;
    }
    return y;
}

template <typename T>
Tensor<T> Relu<T>::backward(const Tensor<T>& grad_out)
{
    require(active.size() == grad_out.data.size(), "relu backward without a training forward pass");
    Tensor<T> g = grad_out;
    for (std::size_t i = 0; i < g.data.size(); ++i) {
        if (!active[i]) g.data[i] = T(0);
    }
    return g;
}

// ------------------------------------------------------------- MaxPool2d

template <typename T>
Tensor<T> MaxPool2d<T>::forward(const Tensor<T>& x, Mode mode)
{
    require(x.h >= size && x.w >= size, "pooling input smaller than the window");
    in_h = x.h;
    in_w = x.w;
    const std::size_t oh = (x.h - size) / stride + 1;
    const std::size_t ow = (x.w - size) / stride + 1;
    Tensor<T> y(x.n, x.c, oh, ow);
    if (mode == Mode::kTrain) {
        argmax.assign(y.data.size(), 0);
    }
    for (std::size_t plane = 0; plane < x.n * x.c; ++plane) {
        const T* in = x.data.data() + plane * x.h * x.w;
        for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox) {
                std::size_t best = (oy * stride) * x.w + ox * stride;
                for (std::size_t dy = 0; dy < size; ++dy) {
                    for (std::size_t dx = 0; dx < size; ++dx) {
                        const std::size_t idx = (oy * stride + dy) * x.w + ox * stride + dx;
                        if (in[idx] > in[best]) best = idx;
                    }
                }
                const std::size_t o = plane * oh * ow + oy * ow + ox;
                y.data[o] = in[best];
                if (mode == Mode::kTrain) argmax[o] = static_cast<std::uint32_t>(best);
            }
        }
    }
    return y;
}

template <typename T>
Tensor<T> MaxPool2d<T>::backward(const Tensor<T>& grad_out)
{
    require(argmax.size() == grad_out.data.size(), "pooling backward without a training forward pass");
    Tensor<T> g(grad_out.n, grad_out.c, in_h, in_w);
    const std::size_t out_plane = grad_out.h * grad_out.w;
    for (std::size_t plane = 0; plane < grad_out.n * grad_out.c; ++plane) {
        T* dst = g.data.data() + plane * in_h * in_w;
        for (std::size_t i = 0; i < out_plane; ++i) {
            const std::size_t o = plane * out_plane + i;
            dst[argmax[o]] += grad_out.data[o];
        }
    }
    return g;
}

// ----------------------------------------------------------------- Dense

template <typename T>
Tensor<T> Dense<T>::forward(const Tensor<T>& x, Mode mode)
{
    require(x.sample_size() == in_features, "fully-connected input size mismatch");
    in_c = x.c;
    in_h = x.h;
    in_w = x.w;
    if (mode == Mode::kTrain) {
        input = x;
    }
    Tensor<T> y(x.n, out_features, 1, 1);
    ConstMapMat<T> xin(x.data.data(), static_cast<Eigen::Index>(x.n), static_cast<Eigen::Index>(in_features));
    ConstMapMat<T> w(weight.data(), static_cast<Eigen::Index>(out_features), static_cast<Eigen::Index>(in_features));
    MapMat<T> out(y.data.data(), static_cast<Eigen::Index>(x.n), static_cast<Eigen::Index>(out_features));
    out.noalias() = xin * w.transpose();
    for (std::size_t s = 0; s < x.n; ++s) {
        for (std::size_t o = 0; o < out_features; ++o) {
            out(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(o)) += bias[o];
        }
    }
    return y;
}

template <typename T>
Tensor<T> Dense<T>::backward(const Tensor<T>& grad_out)
{
    require(input.n == grad_out.n && input.sample_size() == in_features,
            "fully-connected backward without a training forward pass");
    const auto n = static_cast<Eigen::Index>(grad_out.n);
    ConstMapMat<T> go(grad_out.data.data(), n, static_cast<Eigen::Index>(out_features));
    ConstMapMat<T> xin(input.data.data(), n, static_cast<Eigen::Index>(in_features));
    MapMat<T> gw(grad_weight.data(), static_cast<Eigen::Index>(out_features), static_cast<Eigen::Index>(in_features));
    gw.noalias() += go.transpose() * xin;
    for (std::size_t o = 0; o < out_features; ++o) {
        T acc{};
        for (std::size_t s = 0; s < grad_out.n; ++s) acc += grad_out.data[s * out_features + o];
        grad_bias[o] += acc;
    }
    Tensor<T> grad_in;
    if (needs_input_grad) {
        grad_in = Tensor<T>(grad_out.n, in_c, in_h, in_w);
        ConstMapMat<T> w(weight.data(), static_cast<Eigen::Index>(out_features),
                         static_cast<Eigen::Index>(in_features));
        MapMat<T> gi(grad_in.data.data(), n, static_cast<Eigen::Index>(in_features));
        gi.noalias() = go * w;
    }
    return grad_in;
}

// -------------------------------------------------------------- BasicCnn

template <typename T>
Tensor<T> BasicCnn<T>::forward(const Tensor<T>& x, Mode mode)
{
    require(x.c == 1 && x.h == input_size && x.w == input_size, "input does not match the model input size");
    Tensor<T> cur = x;
    for (auto& layer : layers) {
        cur = std::visit([&](auto& l) { return l.forward(cur, mode); }, layer);
    }
    return cur;
}

template <typename T>
void BasicCnn<T>::backward(const Tensor<T>& grad_logits)
{
    Tensor<T> grad = grad_logits;
    for (auto it = layers.rbegin(); it != layers.rend(); ++it) {
        grad = std::visit([&](auto& l) { return l.backward(grad); }, *it);
        if (grad.data.empty()) {
            break;
        }
    }
}

template <typename T>
void BasicCnn<T>::zero_grad()
{
    for (ParamView<T>& p : parameters()) {
        std::fill(p.grad.begin(), p.grad.end(), T{});
    }
}

template <typename T>
std::vector<ParamView<T>> BasicCnn<T>::parameters()
{
    std::vector<ParamView<T>> out;
    for (auto& layer : layers) {
        if (auto* c = std::get_if<Conv2d<T>>(&layer)) {
            out.push_back({c->weight, c->grad_weight, c->lr_factor});
            out.push_back({c->bias, c->grad_bias, c->lr_factor});
        } else if (auto* b = std::get_if<BatchNorm2d<T>>(&layer)) {
            out.push_back({b->gamma, b->grad_gamma, b->lr_factor});
            out.push_back({b->beta, b->grad_beta, b->lr_factor});
        } else if (auto* d = std::get_if<Dense<T>>(&layer)) {
            out.push_back({d->weight, d->grad_weight, d->lr_factor});
            out.push_back({d->bias, d->grad_bias, d->lr_factor});
        }
    }
    return out;
}

template <typename T>
std::vector<std::size_t> BasicCnn<T>::parameter_counts() const
{
    std::vector<std::size_t> counts;
    for (const auto& layer : layers) {
        const std::size_t n = std::visit([](const auto& l) { return l.parameter_count(); }, layer);
        if (n > 0) counts.push_back(n);
    }
    return counts;
}

template <typename T>
std::size_t BasicCnn<T>::total_parameters() const
{
    std::size_t total = 0;
    for (std::size_t n : parameter_counts()) total += n;
    return total;
}

template <typename T>
Dense<T>& BasicCnn<T>::classifier()
{
    require(!layers.empty() && std::holds_alternative<Dense<T>>(layers.back()), "model has no classifier layer");
    return std::get<Dense<T>>(layers.back());
}

template <typename T>
const Dense<T>& BasicCnn<T>::classifier() const
{
    require(!layers.empty() && std::holds_alternative<Dense<T>>(layers.back()), "model has no classifier layer");
    return std::get<Dense<T>>(layers.back());
}

namespace {

template <typename U, typename T>
std::vector<U> convert(const std::vector<T>& v)
{
    return std::vector<U>(v.begin(), v.end());
}

}  // namespace

template <typename T>
template <typename U>
BasicCnn<U> BasicCnn<T>::cast() const
{
    BasicCnn<U> out;
    out.input_size = input_size;
    out.num_classes = num_classes;
    for (const auto& layer : layers) {
        std::visit(
            [&](const auto& l) {
                using L = std::decay_t<decltype(l)>;
                if constexpr (std::is_same_v<L, Conv2d<T>>) {
                    Conv2d<U> c;
                    c.in_channels = l.in_channels;
                    c.out_channels = l.out_channels;
                    c.kernel = l.kernel;
                    c.weight = convert<U>(l.weight);
                    c.bias = convert<U>(l.bias);
                    c.grad_weight.assign(c.weight.size(), U{});
                    c.grad_bias.assign(c.bias.size(), U{});
                    c.lr_factor = l.lr_factor;
                    c.needs_input_grad = l.needs_input_grad;
                    out.layers.emplace_back(std::move(c));
                } else if constexpr (std::is_same_v<L, BatchNorm2d<T>>) {
                    BatchNorm2d<U> b;
                    b.channels = l.channels;
                    b.eps = l.eps;
                    b.momentum = l.momentum;
                    b.gamma = convert<U>(l.gamma);
                    b.beta = convert<U>(l.beta);
                    b.running_mean = convert<U>(l.running_mean);
                    b.running_var = convert<U>(l.running_var);
                    b.grad_gamma.assign(b.gamma.size(), U{});
                    b.grad_beta.assign(b.beta.size(), U{});
                    b.lr_factor = l.lr_factor;
                    out.layers.emplace_back(std::move(b));
                } else if constexpr (std::is_same_v<L, Relu<T>>) {
                    out.layers.emplace_back(Relu<U>{});
                } else if constexpr (std::is_same_v<L, MaxPool2d<T>>) {
                    MaxPool2d<U> p;
                    p.size = l.size;
                    p.stride = l.stride;
                    out.layers.emplace_back(std::move(p));
                } else {
                    Dense<U> d;
                    d.in_features = l.in_features;
                    d.out_features = l.out_features;
                    d.weight = convert<U>(l.weight);
                    d.bias = convert<U>(l.bias);
                    d.grad_weight.assign(d.weight.size(), U{});
                    d.grad_bias.assign(d.bias.size(), U{});
                    d.lr_factor = l.lr_factor;
                    d.needs_input_grad = l.needs_input_grad;
                    out.layers.emplace_back(std::move(d));
                }
            },
            layer);
    }
    return out;
}

std::size_t feature_map_size(std::size_t input_size)
{
    std::size_t s = input_size;
    for (int block = 0; block < 3; ++block) {
        if (s < 3) return 0;
        s -= 2;  // valid 3x3 convolution
        if (block < 2) {
            if (s < 2) return 0;
            s /= 2;  // floor for odd sizes
        }
    }
    return s;
}

template <typename T>
BasicCnn<T> build_model(std::size_t input_size, std::size_t num_classes, std::uint64_t seed)
{
    require(input_size >= 16, "input size must be at least 16");
    const std::size_t fm = feature_map_size(input_size);
    require(fm >= 1, "input is too small for three valid convolutions and two poolings");
    require(num_classes >= 1, "model needs at least one class");

    BasicCnn<T> model;
    model.input_size = input_size;
    model.num_classes = num_classes;
    constexpr std::size_t widths[3] = {8, 16, 32};
    std::size_t in_c = 1;
    for (int block = 0; block < 3; ++block) {
        Rng rng(derive_seed(seed, {0xc0ULL, static_cast<std::uint64_t>(block)}));
        Conv2d<T> conv = make_conv<T>(in_c, widths[block], rng);
        conv.needs_input_grad = block > 0;
        model.layers.emplace_back(std::move(conv));
        model.layers.emplace_back(make_bn<T>(widths[block]));
        model.layers.emplace_back(Relu<T>{});
        if (block < 2) {
            model.layers.emplace_back(MaxPool2d<T>{});
        }
        in_c = widths[block];
    }
    Rng rng(derive_seed(seed, {0xfcULL}));
    model.layers.emplace_back(make_dense<T>(fm * fm * in_c, num_classes, rng));
    return model;
}

template <typename T>
std::vector<T> softmax(std::span<const T> logits)
{
    std::vector<T> p(logits.size());
    if (logits.empty()) return p;
    const double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    std::vector<double> e(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        e[i] = std::exp(static_cast<double>(logits[i]) - mx);
        sum += e[i];
    }
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = static_cast<T>(e[i] / sum);
    }
    return p;
}

template <typename T>
double softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> labels, Tensor<T>& grad)
{
    require(labels.size() == logits.n, "label count does not match the batch");
    const std::size_t classes = logits.sample_size();
    grad = Tensor<T>(logits.n, logits.c, logits.h, logits.w);
    double loss = 0.0;
    const double inv_n = 1.0 / static_cast<double>(logits.n);
    for (std::size_t s = 0; s < logits.n; ++s) {
        const int label = labels[s];
        require(label >= 0 && static_cast<std::size_t>(label) < classes, "label out of range");
        const auto row = logits.sample(s);
        const double mx = *std::max_element(row.begin(), row.end());
        double sum = 0.0;
        for (T v : row) sum += std::exp(static_cast<double>(v) - mx);
        const double log_sum = std::log(sum) + mx;
        loss += log_sum - static_cast<double>(row[static_cast<std::size_t>(label)]);
        auto g = grad.sample(s);
        for (std::size_t k = 0; k < classes; ++k) {
            const double p = std::exp(static_cast<double>(row[k]) - log_sum);
            g[k] = static_cast<T>((p - (static_cast<int>(k) == label ? 1.0 : 0.0)) * inv_n);
        }
    }
    return loss * inv_n;
}

template <typename T>
double compute_gradients(BasicCnn<T>& model, const Tensor<T>& batch, std::span<const int> labels)
{
    model.zero_grad();
    const Tensor<T> logits = model.forward(batch, Mode::kTrain);
    Tensor<T> grad;
    const double loss = softmax_cross_entropy(logits, labels, grad);
    model.backward(grad);
    return loss;
}

namespace {

template <typename T>
Tensor<T> single_image(const BasicCnn<T>& model, std::span<const T> image)
{
    require(image.size() == model.input_size * model.input_size, "image does not match the model input size");
    Tensor<T> x(1, 1, model.input_size, model.input_size);
    std::copy(image.begin(), image.end(), x.data.begin());
    return x;
}

}  // namespace

template <typename T>
std::vector<T> forward(BasicCnn<T>& model, std::span<const T> image)
{
    const Tensor<T> logits = model.forward(single_image(model, image), Mode::kInfer);
    return softmax<T>(logits.data);
}

template <typename T>
double backward(BasicCnn<T>& model, std::span<const T> image, int label)
{
    const int labels[1] = {label};
    return compute_gradients(model, single_image(model, image), labels);
}

template <typename T>
void adam_step(std::span<T> params, std::span<const T> grads, AdamMoments& moments, std::int64_t step, double lr,
               double lr_factor, const AdamConfig& cfg)
{
    require(params.size() == grads.size(), "parameter and gradient sizes differ");
    require(step >= 1, "Adam step counter starts at 1");
    if (moments.m.size() != params.size()) {
        moments.m.assign(params.size(), 0.0);
        moments.v.assign(params.size(), 0.0);
    }
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
    const double rate = lr * lr_factor;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        moments.m[i] = cfg.beta1 * moments.m[i] + (1.0 - cfg.beta1) * g;
        moments.v[i] = cfg.beta2 * moments.v[i] + (1.0 - cfg.beta2) * g * g;
        const double m_hat = moments.m[i] / c1;
        const double v_hat = moments.v[i] / c2;
        params[i] = static_cast<T>(params[i] - rate * m_hat / (std::sqrt(v_hat) + cfg.eps));
    }
}

template <typename T>
void Adam<T>::step(BasicCnn<T>& model)
{
    std::vector<ParamView<T>> params = model.parameters();
    if (moments_.size() != params.size()) {
        moments_.assign(params.size(), AdamMoments{});
    }
    ++t_;
    for (std::size_t i = 0; i < params.size(); ++i) {
        adam_step<T>(params[i].value, params[i].grad, moments_[i], t_, lr_, params[i].lr_factor, cfg_);
    }
}

void ImageDataset::add(std::span<const float> image, int label)
{
    if (image_size == 0) {
        const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(image.size()))));
        require(side * side == image.size() && side > 0, "image must be square");
        image_size = side;
    }
    require(image.size() == image_size * image_size, "image size differs from the dataset");
    pixels.insert(pixels.end(), image.begin(), image.end());
    labels.push_back(label);
}

namespace {

Tensor<float> gather(const ImageDataset& data, std::span<const std::size_t> indices, std::vector<int>& labels)
{
    const std::size_t side = data.image_size;
    Tensor<float> x(indices.size(), 1, side, side);
    labels.resize(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const auto img = data.image(indices[i]);
        std::copy(img.begin(), img.end(), x.sample(i).begin());
        labels[i] = data.labels[indices[i]];
    }
    return x;
}

TrainResult fit(CnnModel& model, const ImageDataset& data, double lr, std::size_t batch_size, int epochs,
                std::uint64_t seed, const AdamConfig& adam_cfg)
{
    require(data.size() > 0, "training dataset is empty");
    require(data.image_size == model.input_size, "dataset image size does not match the model");
    require(batch_size >= 1, "batch size must be positive");
    require(epochs >= 0, "epoch count must be nonnegative");
    for (int label : data.labels) {
        require(label >= 0 && static_cast<std::size_t>(label) < model.num_classes, "label out of range");
    }

    Adam<float> optimizer(lr, adam_cfg);
    TrainResult result;
    std::vector<std::size_t> order(data.size());
    std::vector<int> labels;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng rng(derive_seed(seed, {0x5b0ffULL, static_cast<std::uint64_t>(epoch)}));
        for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[rng.below(i)]);
        }
        double total = 0.0;
        for (std::size_t start = 0; start < order.size(); start += batch_size) {
            const std::size_t count = std::min(batch_size, order.size() - start);
            const Tensor<float> batch = gather(data, std::span(order).subspan(start, count), labels);
            const double loss = compute_gradients(model, batch, labels);
            optimizer.step(model);
            total += loss * static_cast<double>(count);
        }
        result.epoch_loss.push_back(total / static_cast<double>(order.size()));
    }
    return result;
}

}  // namespace

TrainResult train(CnnModel& model, const ImageDataset& data, const TrainConfig& cfg)
{
    return fit(model, data, cfg.learning_rate, cfg.batch_size, cfg.epochs, cfg.seed, cfg.adam);
}

CnnModel make_transfer_model(const CnnModel& base, std::size_t num_classes, std::uint64_t seed,
                             double new_layer_lr_factor)
{
    require(num_classes >= 1, "model needs at least one class");
    CnnModel model = base;
    model.num_classes = num_classes;
    for (auto& layer : model.layers) {
        if (auto* c = std::get_if<Conv2d<float>>(&layer)) c->lr_factor = 1.0;
        if (auto* b = std::get_if<BatchNorm2d<float>>(&layer)) b->lr_factor = 1.0;
    }
    Dense<float>& old = model.classifier();
    Rng rng(derive_seed(seed, {0x7a5fe2ULL}));
    Dense<float> fresh = make_dense<float>(old.in_features, num_classes, rng);
    fresh.lr_factor = new_layer_lr_factor;
    old = std::move(fresh);
    return model;
}

CnnModel transfer(const CnnModel& base, const ImageDataset& data, std::size_t num_classes, const TransferConfig& cfg,
                  TrainResult* result)
{
    CnnModel model = make_transfer_model(base, num_classes, cfg.seed, cfg.new_layer_lr_factor);
    TrainResult r = fit(model, data, cfg.learning_rate, cfg.batch_size, cfg.epochs, cfg.seed, cfg.adam);
    if (result) *result = std::move(r);
    return model;
}

Prediction top_class(std::span<const float> probabilities)
{
    require(!probabilities.empty(), "empty probability vector");
    Prediction p{0, probabilities[0]};
    for (std::size_t k = 1; k < probabilities.size(); ++k) {
        if (probabilities[k] > p.confidence) {
            p.label = static_cast<int>(k);
            p.confidence = probabilities[k];
        }
    }
    return p;
}

Prediction predict_score(CnnModel& model, std::span<const float> image)
{
    const std::vector<float> p = forward<float>(model, image);
    return top_class(p);
}

std::vector<float> predict_probabilities(CnnModel& model, const ImageDataset& data, std::size_t batch)
{
    require(data.image_size == model.input_size || data.size() == 0, "dataset image size does not match the model");
    std::vector<float> out;
    out.reserve(data.size() * model.num_classes);
    std::vector<std::size_t> idx;
    std::vector<int> labels;
    for (std::size_t start = 0; start < data.size(); start += batch) {
        const std::size_t count = std::min(batch, data.size() - start);
        idx.resize(count);
        for (std::size_t i = 0; i < count; ++i) idx[i] = start + i;
        const Tensor<float> x = gather(data, idx, labels);
        const Tensor<float> logits = model.forward(x, Mode::kInfer);
        for (std::size_t s = 0; s < count; ++s) {
            const std::vector<float> p = softmax<float>(logits.sample(s));
            out.insert(out.end(), p.begin(), p.end());
        }
    }
    return out;
}

// Explicit instantiations: float for training and inference, double for
// finite-difference gradient checks.
#define RFFI_INSTANTIATE(T)                                                                              \
    template struct Conv2d<T>;                                                                           \
    template struct BatchNorm2d<T>;                                                                      \
    template struct Relu<T>;                                                                             \
    template struct MaxPool2d<T>;                                                                        \
    template struct Dense<T>;                                                                            \
    template struct BasicCnn<T>;                                                                         \
    template BasicCnn<T> build_model<T>(std::size_t, std::size_t, std::uint64_t);                        \
    template std::vector<T> softmax<T>(std::span<const T>);                                              \
    template double softmax_cross_entropy<T>(const Tensor<T>&, std::span<const int>, Tensor<T>&);        \
    template double compute_gradients<T>(BasicCnn<T>&, const Tensor<T>&, std::span<const int>);          \
    template std::vector<T> forward<T>(BasicCnn<T>&, std::span<const T>);                                \
    template double backward<T>(BasicCnn<T>&, std::span<const T>, int);                                  \
    template void adam_step<T>(std::span<T>, std::span<const T>, AdamMoments&, std::int64_t, double, double, \
                               const AdamConfig&);                                                       \
    template class Adam<T>;

RFFI_INSTANTIATE(float)
RFFI_INSTANTIATE(double)
#undef RFFI_INSTANTIATE

template BasicCnn<double> BasicCnn<float>::cast<double>() const;
template BasicCnn<float> BasicCnn<double>::cast<float>() const;
template BasicCnn<float> BasicCnn<float>::cast<float>() const;

}  // namespace rffi
