#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "rffi/cnn.hpp"
#include "rffi/errors.hpp"

namespace rffi {

namespace {

constexpr std::uint32_t kModelVersion = 1;

enum LayerTag : std::uint8_t {
    kTagConv = 1,
    kTagBatchNorm = 2,
    kTagRelu = 3,
    kTagMaxPool = 4,
    kTagDense = 5,
};

class Writer {
public:
    void u8(std::uint8_t v) { bytes_.push_back(v); }
    void u32(std::uint32_t v)
    {
        for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void floats(const std::vector<float>& v)
    {
        for (float f : v) u32(std::bit_cast<std::uint32_t>(f));
    }
    std::vector<std::uint8_t> take() { return std::move(bytes_); }

private:
    std::vector<std::uint8_t> bytes_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}
    std::uint8_t u8()
    {
        need(1);
        return bytes_[pos_++];
    }
    std::uint32_t u32()
    {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::vector<float> floats(std::size_t n)
    {
        need(4 * n);
        std::vector<float> v(n);
        for (float& f : v) f = std::bit_cast<float>(u32());
        return v;
    }
    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const
    {
        if (bytes_.size() - pos_ < n) throw IoError("truncated RFC1 model");
    }
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_model(const CnnModel& model)
{
    Writer w;
    for (char ch : {'R', 'F', 'C', '1'}) w.u8(static_cast<std::uint8_t>(ch));
    w.u32(kModelVersion);
    w.u32(static_cast<std::uint32_t>(model.input_size));
    w.u32(static_cast<std::uint32_t>(model.num_classes));
    w.u32(static_cast<std::uint32_t>(model.layers.size()));
    for (const auto& layer : model.layers) {
        if (const auto* c = std::get_if<Conv2d<float>>(&layer)) {
            w.u8(kTagConv);
            w.u32(static_cast<std::uint32_t>(c->out_channels));
            w.u32(static_cast<std::uint32_t>(c->in_channels));
            w.u32(static_cast<std::uint32_t>(c->kernel));
            w.floats(c->weight);
            w.floats(c->bias);
        } else if (const auto* b = std::get_if<BatchNorm2d<float>>(&layer)) {
            w.u8(kTagBatchNorm);
            w.u32(static_cast<std::uint32_t>(b->channels));
            w.floats(b->gamma);
            w.floats(b->beta);
            w.floats(b->running_mean);
            w.floats(b->running_var);
        } else if (std::holds_alternative<Relu<float>>(layer)) {
            w.u8(kTagRelu);
        } else if (const auto* p = std::get_if<MaxPool2d<float>>(&layer)) {
            w.u8(kTagMaxPool);
            w.u32(static_cast<std::uint32_t>(p->size));
            w.u32(static_cast<std::uint32_t>(p->stride));
        } else if (const auto* d = std::get_if<Dense<float>>(&layer)) {
            w.u8(kTagDense);
            w.u32(static_cast<std::uint32_t>(d->out_features));
            w.u32(static_cast<std::uint32_t>(d->in_features));
            w.floats(d->weight);
            w.floats(d->bias);
        }
    }
    return w.take();
}

CnnModel deserialize_model(std::span<const std::uint8_t> bytes)
{
    Reader r(bytes);
    char magic[4];
    for (char& ch : magic) ch = static_cast<char>(r.u8());
    if (std::memcmp(magic, "RFC1", 4) != 0) {
        throw IoError("not an RFC1 model");
    }
    if (r.u32() != kModelVersion) {
        throw IoError("unsupported RFC1 version");
    }
    CnnModel model;
    model.input_size = r.u32();
    model.num_classes = r.u32();
    const std::uint32_t count = r.u32();
    bool first_conv = true;
    for (std::uint32_t i = 0; i < count; ++i) {
        switch (r.u8()) {
        case kTagConv: {
            Conv2d<float> c;
            c.out_channels = r.u32();
            c.in_channels = r.u32();
            c.kernel = r.u32();
            c.weight = r.floats(c.out_channels * c.in_channels * c.kernel * c.kernel);
            c.bias = r.floats(c.out_channels);
            c.grad_weight.assign(c.weight.size(), 0.0f);
            c.grad_bias.assign(c.bias.size(), 0.0f);
            c.needs_input_grad = !first_conv;
            first_conv = false;
            model.layers.emplace_back(std::move(c));
            break;
        }
        case kTagBatchNorm: {
            BatchNorm2d<float> b;
            b.channels = r.u32();
            b.gamma = r.floats(b.channels);
            b.beta = r.floats(b.channels);
            b.running_mean = r.floats(b.channels);
            b.running_var = r.floats(b.channels);
            b.grad_gamma.assign(b.channels, 0.0f);
            b.grad_beta.assign(b.channels, 0.0f);
            model.layers.emplace_back(std::move(b));
            break;
        }
        case kTagRelu:
            model.layers.emplace_back(Relu<float>{});
            break;
        case kTagMaxPool: {
            MaxPool2d<float> p;
            p.size = r.u32();
            p.stride = r.u32();
            model.layers.emplace_back(std::move(p));
            break;
        }
        case kTagDense: {
            Dense<float> d;
            d.out_features = r.u32();
            d.in_features = r.u32();
            d.weight = r.floats(d.out_features * d.in_features);
            d.bias = r.floats(d.out_features);
            d.grad_weight.assign(d.weight.size(), 0.0f);
            d.grad_bias.assign(d.bias.size(), 0.0f);
            model.layers.emplace_back(std::move(d));
            break;
        }
        default:
            throw IoError("unknown layer tag in RFC1 model");
        }
    }
    if (!r.done()) {
        throw IoError("trailing bytes after RFC1 model");
    }
    return model;
}

void write_model(const std::filesystem::path& path, const CnnModel& model)
{
    const std::vector<std::uint8_t> bytes = serialize_model(model);
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw IoError("failed writing " + path.string());
    }
}

CnnModel read_model(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_model(bytes);
}

}  // namespace rffi
