#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace rffi {

// Batch of feature maps, N x C x H x W, row-major.
template <typename T>
struct Tensor {
    std::size_t n = 0, c = 0, h = 0, w = 0;
    std::vector<T> data;

    Tensor() = default;
    Tensor(std::size_t n_, std::size_t c_, std::size_t h_, std::size_t w_)
        : n(n_), c(c_), h(h_), w(w_), data(n_ * c_ * h_ * w_, T{})
    {
    }
    std::size_t sample_size() const { return c * h * w; }
    std::span<T> sample(std::size_t i) { return {data.data() + i * sample_size(), sample_size()}; }
    std::span<const T> sample(std::size_t i) const { return {data.data() + i * sample_size(), sample_size()}; }
};

enum class Mode { kTrain, kInfer };

// Trainable tensor with its gradient and a learning-rate multiplier.
template <typename T>
struct ParamView {
    std::span<T> value;
    std::span<T> grad;
    double lr_factor = 1.0;
};

// 3x3 (or k x k) valid convolution, stride 1.
template <typename T>
struct Conv2d {
    std::size_t in_channels = 0, out_channels = 0, kernel = 3;
    std::vector<T> weight, bias;  // weight: out x (in * k * k)
    std::vector<T> grad_weight, grad_bias;
    double lr_factor = 1.0;
    bool needs_input_grad = true;

    std::vector<T> cols;  // cached im2col per sample
    std::size_t in_h = 0, in_w = 0;

    Tensor<T> forward(const Tensor<T>& x, Mode mode);
    Tensor<T> backward(const Tensor<T>& grad_out);
    std::size_t parameter_count() const { return weight.size() + bias.size(); }
};

template <typename T>
struct BatchNorm2d {
    std::size_t channels = 0;
    double eps = 1e-5;
    double momentum = 0.9;  // running = momentum * running + (1 - momentum) * batch
    std::vector<T> gamma, beta, running_mean, running_var;
    std::vector<T> grad_gamma, grad_beta;
    double lr_factor = 1.0;

    std::vector<T> x_hat, inv_std;
    std::size_t cached_n = 0, cached_hw = 0;

    Tensor<T> forward(const Tensor<T>& x, Mode mode);
    Tensor<T> backward(const Tensor<T>& grad_out);
    std::size_t parameter_count() const { return gamma.size() + beta.size(); }
};

template <typename T>
struct Relu {
    std::vector<unsigned char> active;
    Tensor<T> forward(const Tensor<T>& x, Mode mode);
    Tensor<T> backward(const Tensor<T>& grad_out);
    std::size_t parameter_count() const { return 0; }
};

// 2x2 max pooling with stride 2; odd trailing rows/columns are dropped.
template <typename T>
struct MaxPool2d {
    std::size_t size = 2, stride = 2;
    std::vector<std::uint32_t> argmax;
    std::size_t in_h = 0, in_w = 0;
    Tensor<T> forward(const Tensor<T>& x, Mode mode);
    Tensor<T> backward(const Tensor<T>& grad_out);
    std::size_t parameter_count() const { return 0; }
};

template <typename T>
struct Dense {
    std::size_t in_features = 0, out_features = 0;
    std::vector<T> weight, bias;  // weight: out x in
    std::vector<T> grad_weight, grad_bias;
    double lr_factor = 1.0;
    bool needs_input_grad = true;

    Tensor<T> input;
    std::size_t in_c = 0, in_h = 0, in_w = 0;

    Tensor<T> forward(const Tensor<T>& x, Mode mode);
    Tensor<T> backward(const Tensor<T>& grad_out);
    std::size_t parameter_count() const { return weight.size() + bias.size(); }
};

template <typename T>
using Layer = std::variant<Conv2d<T>, BatchNorm2d<T>, Relu<T>, MaxPool2d<T>, Dense<T>>;

// Three conv/BN/ReLU blocks (8, 16, 32 filters) with 2x2 pooling after the
// first two, then a fully-connected output layer feeding a softmax.
template <typename T>
struct BasicCnn {
    std::size_t input_size = 0;
    std::size_t num_classes = 0;
    std::vector<Layer<T>> layers;

    // Logits, N x num_classes.
    Tensor<T> forward(const Tensor<T>& x, Mode mode);
    void backward(const Tensor<T>& grad_logits);
    void zero_grad();
    std::vector<ParamView<T>> parameters();
    // Trainable parameter count per parameterized layer, in stack order.
    std::vector<std::size_t> parameter_counts() const;
    std::size_t total_parameters() const;
    Dense<T>& classifier();
    const Dense<T>& classifier() const;

    template <typename U>
    BasicCnn<U> cast() const;
};

using CnnModel = BasicCnn<float>;

// Spatial size that reaches the fully-connected layer, or 0 when the input is
// too small for three valid convolutions and two poolings.
std::size_t feature_map_size(std::size_t input_size);

template <typename T = float>
BasicCnn<T> build_model(std::size_t input_size, std::size_t num_classes, std::uint64_t seed);

template <typename T>
std::vector<T> softmax(std::span<const T> logits);

// Mean cross-entropy over the batch; fills `grad` with dL/dlogits.
template <typename T>
double softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> labels, Tensor<T>& grad);

// Training-mode forward and backward on one batch. Gradients are overwritten.
template <typename T>
double compute_gradients(BasicCnn<T>& model, const Tensor<T>& batch, std::span<const int> labels);

// Single image, inference mode. Pixels pre-scaled to [0, 1], input_size^2 values.
template <typename T>
std::vector<T> forward(BasicCnn<T>& model, std::span<const T> image);

// Single-sample training-mode gradient; returns the loss.
template <typename T>
double backward(BasicCnn<T>& model, std::span<const T> image, int label);

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamMoments {
    std::vector<double> m, v;
};

// One bias-corrected Adam update of `params` in place; `step` counts from 1.
template <typename T>
void adam_step(std::span<T> params, std::span<const T> grads, AdamMoments& moments, std::int64_t step, double lr,
               double lr_factor = 1.0, const AdamConfig& cfg = {});

template <typename T>
class Adam {
public:
    Adam(double lr, AdamConfig cfg = {}) : lr_(lr), cfg_(cfg) {}
    void step(BasicCnn<T>& model);
    std::int64_t steps() const { return t_; }

private:
    double lr_;
    AdamConfig cfg_;
    std::int64_t t_ = 0;
    std::vector<AdamMoments> moments_;
};

// Images stored as [0,1] floats, image_size^2 each.
struct ImageDataset {
    std::size_t image_size = 0;
    std::vector<float> pixels;
    std::vector<int> labels;

    std::size_t size() const { return labels.size(); }
    std::span<const float> image(std::size_t i) const
    {
        return {pixels.data() + i * image_size * image_size, image_size * image_size};
    }
    void add(std::span<const float> image, int label);
};

struct TrainConfig {
    double learning_rate = 0.005;
    std::size_t batch_size = 32;
    int epochs = 30;
    std::uint64_t seed = 0;
    AdamConfig adam;
};

struct TransferConfig {
    double learning_rate = 0.0001;
    double new_layer_lr_factor = 20.0;
    std::size_t batch_size = 32;
    int epochs = 20;
    std::uint64_t seed = 0;
    AdamConfig adam;
};

struct TrainResult {
    std::vector<double> epoch_loss;
};

TrainResult train(CnnModel& model, const ImageDataset& data, const TrainConfig& cfg);

// Copies conv/batchnorm layers from `base`, replaces the fully-connected output
// layer for `num_classes`, and fine-tunes with the new layer at lr_factor.
CnnModel make_transfer_model(const CnnModel& base, std::size_t num_classes, std::uint64_t seed,
                             double new_layer_lr_factor);
CnnModel transfer(const CnnModel& base, const ImageDataset& data, std::size_t num_classes, const TransferConfig& cfg,
                  TrainResult* result = nullptr);

struct Prediction {
    int label = 0;
    double confidence = 0.0;
};

Prediction predict_score(CnnModel& model, std::span<const float> image);
// Batched inference over a dataset, probabilities row-major N x num_classes.
std::vector<float> predict_probabilities(CnnModel& model, const ImageDataset& data, std::size_t batch = 64);
Prediction top_class(std::span<const float> probabilities);

// RFC1 model container.
std::vector<std::uint8_t> serialize_model(const CnnModel& model);
CnnModel deserialize_model(std::span<const std::uint8_t> bytes);
void write_model(const std::filesystem::path& path, const CnnModel& model);
CnnModel read_model(const std::filesystem::path& path);

}  // namespace rffi
