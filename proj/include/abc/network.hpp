#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "abc/activations.hpp"
#include "abc/batchnorm.hpp"
#include "abc/errors.hpp"
#include "abc/ops.hpp"
#include "abc/random.hpp"
#include "abc/schedules.hpp"
#include "abc/tensor.hpp"

namespace abc {

enum class LayerKind : std::uint8_t {
    Input,
    Linear,
    Conv,
    MaxPool,
    Relu,
    Flatten,
    BatchNorm,
    Abc,
    ScaledTanh,
};

/// One token of the architecture string, e.g. linear:64 or conv:32,5,1,2.
struct LayerSpec {
    LayerKind kind;
    std::vector<int> args;

    std::string to_token() const {
        std::string name;
        switch (kind) {
            case LayerKind::Input: name = "input"; break;
            case LayerKind::Linear: name = "linear"; break;
            case LayerKind::Conv: name = "conv"; break;
            case LayerKind::MaxPool: name = "maxpool"; break;
            case LayerKind::Relu: name = "relu"; break;
            case LayerKind::Flatten: name = "flatten"; break;
            case LayerKind::BatchNorm: name = "batchnorm"; break;
            case LayerKind::Abc: name = "abc"; break;
            case LayerKind::ScaledTanh: name = "tanh"; break;
        }
        if (args.empty()) return name;
        std::ostringstream os;
        os << name << ':';
        for (std::size_t i = 0; i < args.size(); ++i) {
            if (i) os << (kind == LayerKind::Input ? 'x' : ',');
            os << args[i];
        }
        return os.str();
    }
};

/// Parses "input:32 linear:64 relu linear:12 batchnorm abc" style strings.
/// input takes 1 (flat) or 3 (CxHxW, 'x'-separated) dims; conv takes
/// filters,kernel,stride,pad; maxpool takes window,stride; linear takes the
/// output width.
inline std::vector<LayerSpec> parse_architecture(const std::string& text) {
    std::vector<LayerSpec> specs;
    std::istringstream is(text);
    std::string token;
    while (is >> token) {
        std::string name = token;
        std::string argstr;
        if (const auto colon = token.find(':'); colon != std::string::npos) {
            name = token.substr(0, colon);
            argstr = token.substr(colon + 1);
        }
        LayerSpec spec;
        if (name == "input")
            spec.kind = LayerKind::Input;
        else if (name == "linear")
            spec.kind = LayerKind::Linear;
        else if (name == "conv")
            spec.kind = LayerKind::Conv;
        else if (name == "maxpool")
            spec.kind = LayerKind::MaxPool;
        else if (name == "relu")
            spec.kind = LayerKind::Relu;
        else if (name == "flatten")
            spec.kind = LayerKind::Flatten;
        else if (name == "batchnorm")
            spec.kind = LayerKind::BatchNorm;
        else if (name == "abc")
            spec.kind = LayerKind::Abc;
        else if (name == "tanh")
            spec.kind = LayerKind::ScaledTanh;
        else
            throw ConfigError("architecture: unknown layer '" + name + "'");
        if (!argstr.empty()) {
            std::string piece;
            std::istringstream args(argstr);
            const char sep = spec.kind == LayerKind::Input ? 'x' : ',';
            while (std::getline(args, piece, sep)) {
                try {
                    spec.args.push_back(std::stoi(piece));
                } catch (const std::exception&) {
                    throw ConfigError("architecture: bad argument '" + piece + "' in '" + token + "'");
                }
            }
        }
        specs.push_back(std::move(spec));
    }
    if (specs.empty()) throw ConfigError("architecture: empty layer list");
    return specs;
}

inline std::string architecture_to_string(const std::vector<LayerSpec>& specs) {
    std::string out;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        if (i) out += ' ';
        out += specs[i].to_token();
    }
    return out;
}

/// Result of one forward pass: the network output plus the node feeding the
/// binarizing activation (the post-BN pre-activation codes are extracted
/// from), and the pre-activation nodes of every kinked activation for the
/// gradient checker's kink-margin rule.
struct ForwardNodes {
    NodeId output = -1;
    NodeId code_input = -1;  // -1 when the net has no binarizing layer
    std::vector<NodeId> kink_inputs;
};

/// A stack of layers instantiated from LayerSpecs, holding the trainable
/// parameters and BN state. Forward builds nodes on a caller-owned graph.
template <typename T>
class Network {
public:
    Network() = default;

    /// Builds and Xavier-initializes. Shapes are propagated from the input
    /// spec; invalid stacks throw ConfigError.
    Network(std::vector<LayerSpec> specs, Rng& rng) : specs_(std::move(specs)) { build(&rng); }

    /// Builds without initialization, for structural validation and loading.
    static Network probe(std::vector<LayerSpec> specs) {
        Network net;
        net.specs_ = std::move(specs);
        net.build(nullptr);
        return net;
    }

    const std::vector<LayerSpec>& specs() const { return specs_; }

    std::vector<Parameter<T>*> parameters() {
        std::vector<Parameter<T>*> out;
        for (auto& layer : layers_) {
            if (auto* lin = std::get_if<LinearLayer>(&layer)) {
                out.push_back(&lin->weight);
                out.push_back(&lin->bias);
            } else if (auto* conv = std::get_if<ConvLayer>(&layer)) {
                out.push_back(&conv->kernel);
                out.push_back(&conv->bias);
            } else if (auto* bn = std::get_if<BnLayer>(&layer)) {
                out.push_back(&bn->state.gamma);
                out.push_back(&bn->state.beta);
            }
        }
        return out;
    }

    /// Parameter pointers for layers at or after the binarizing activation
    /// (used by the r=0 freeze property: everything NOT in this set must stop
    /// moving once r hits 0).
    std::vector<Parameter<T>*> parameters_after_binarizer() {
        std::vector<Parameter<T>*> out;
        bool after = false;
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            if (specs_[i + 1].kind == LayerKind::Abc || specs_[i + 1].kind == LayerKind::ScaledTanh) {
                after = true;
                continue;
            }
            if (!after) continue;
            auto& layer = layers_[i];
            if (auto* lin = std::get_if<LinearLayer>(&layer)) {
                out.push_back(&lin->weight);
                out.push_back(&lin->bias);
            } else if (auto* conv = std::get_if<ConvLayer>(&layer)) {
                out.push_back(&conv->kernel);
                out.push_back(&conv->bias);
            } else if (auto* bn = std::get_if<BnLayer>(&layer)) {
                out.push_back(&bn->state.gamma);
                out.push_back(&bn->state.beta);
            }
        }
        return out;
    }

    std::vector<BatchNormState<T>*> batchnorm_states() {
        std::vector<BatchNormState<T>*> out;
        for (auto& layer : layers_) {
            if (auto* bn = std::get_if<BnLayer>(&layer)) out.push_back(&bn->state);
        }
        return out;
    }

    bool has_binarizer() const {
        for (const LayerSpec& s : specs_) {
            if (s.kind == LayerKind::Abc || s.kind == LayerKind::ScaledTanh) return true;
        }
        return false;
    }

    /// Output width of the layer feeding the binarizing activation (the code
    /// length), or the final output width when there is no binarizer.
    int code_bits() const { return code_bits_; }

    ForwardNodes forward(Graph<T>& g, NodeId x, bool train, const ScheduleState& sched) {
        ForwardNodes nodes;
        NodeId cur = x;
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            auto& layer = layers_[i];
            if (auto* lin = std::get_if<LinearLayer>(&layer)) {
                cur = linear(g, cur, g.param(lin->weight), g.param(lin->bias));
            } else if (auto* conv = std::get_if<ConvLayer>(&layer)) {
                cur = conv2d(g, cur, g.param(conv->kernel), conv->stride, conv->pad);
                cur = channel_bias(g, cur, g.param(conv->bias));
            } else if (auto* pool = std::get_if<PoolLayer>(&layer)) {
                cur = maxpool(g, cur, pool->window, pool->stride);
            } else if (std::get_if<ReluLayer>(&layer)) {
                nodes.kink_inputs.push_back(cur);
                cur = relu(g, cur);
            } else if (std::get_if<FlattenLayer>(&layer)) {
                cur = flatten(g, cur);
            } else if (auto* bn = std::get_if<BnLayer>(&layer)) {
                cur = batchnorm(g, cur, g.param(bn->state.gamma), g.param(bn->state.beta), bn->state, train);
            } else if (std::get_if<AbcLayer>(&layer)) {
                nodes.code_input = cur;
                nodes.kink_inputs.push_back(cur);
                cur = abc_clamp(g, cur, sched.r);
            } else if (std::get_if<TanhLayer>(&layer)) {
                nodes.code_input = cur;
                cur = scaled_tanh(g, cur, sched.alpha);
            }
        }
        nodes.output = cur;
        if (nodes.code_input < 0) nodes.code_input = cur;  // dsh-reg-only style nets
        return nodes;
    }

    /// Eval-mode pre-binarization activations for a feature matrix; the input
    /// of extract_binary_codes.
    Tensor<T> code_activations(const Tensor<T>& features) {
        Graph<T> g;
        ForwardNodes nodes = forward(g, g.leaf(features), /*train=*/false, ScheduleState{});
        return g.value(nodes.code_input);
    }

    // ---- model file -----------------------------------------------------
    // magic "BNM1" | u32 arch string length + bytes | per parameter tensor in
    // layer order: u32 rank, u32 dims, f32 data | per BN layer: running mean
    // and var as f64 + momentum/epsilon.

    void save(const std::string& path) const {
        std::ofstream os(path, std::ios::binary);
        if (!os) throw IoError("model: cannot open " + path + " for writing");
        os.write("BNM1", 4);
        const std::string arch = architecture_to_string(specs_);
        write_u32(os, static_cast<std::uint32_t>(arch.size()));
        os.write(arch.data(), static_cast<std::streamsize>(arch.size()));
        for (const auto& layer : layers_) {
            if (const auto* lin = std::get_if<LinearLayer>(&layer)) {
                write_tensor(os, lin->weight.value);
                write_tensor(os, lin->bias.value);
            } else if (const auto* conv = std::get_if<ConvLayer>(&layer)) {
                write_tensor(os, conv->kernel.value);
                write_tensor(os, conv->bias.value);
            } else if (const auto* bn = std::get_if<BnLayer>(&layer)) {
                write_tensor(os, bn->state.gamma.value);
                write_tensor(os, bn->state.beta.value);
                write_f64(os, bn->state.momentum);
                write_f64(os, bn->state.epsilon);
                for (double v : bn->state.running_mean) write_f64(os, v);
                for (double v : bn->state.running_var) write_f64(os, v);
            }
        }
        if (!os) throw IoError("model: write failed for " + path);
    }

    static Network load(const std::string& path) {
        std::ifstream is(path, std::ios::binary);
        if (!is) throw IoError("model: cannot open " + path);
        char magic[4];
        is.read(magic, 4);
        if (!is || std::memcmp(magic, "BNM1", 4) != 0) throw FormatError("model: bad magic in " + path);
        const std::uint32_t arch_len = read_u32(is);
        std::string arch(arch_len, '\0');
        is.read(arch.data(), arch_len);
        if (!is) throw FormatError("model: truncated architecture string");
        Network net;
        net.specs_ = parse_architecture(arch);
        net.build(nullptr);
        for (auto& layer : net.layers_) {
            if (auto* lin = std::get_if<LinearLayer>(&layer)) {
                read_tensor(is, lin->weight.value);
                read_tensor(is, lin->bias.value);
            } else if (auto* conv = std::get_if<ConvLayer>(&layer)) {
                read_tensor(is, conv->kernel.value);
                read_tensor(is, conv->bias.value);
            } else if (auto* bn = std::get_if<BnLayer>(&layer)) {
                read_tensor(is, bn->state.gamma.value);
                read_tensor(is, bn->state.beta.value);
                bn->state.momentum = read_f64(is);
                bn->state.epsilon = read_f64(is);
                for (double& v : bn->state.running_mean) v = read_f64(is);
                for (double& v : bn->state.running_var) v = read_f64(is);
            }
        }
        if (!is) throw FormatError("model: truncated parameter block in " + path);
        return net;
    }

    const std::vector<int>& input_shape() const { return input_shape_; }

private:
    struct LinearLayer {
        Parameter<T> weight, bias;
    };
    struct ConvLayer {
        Parameter<T> kernel, bias;
        int stride, pad;
    };
    struct PoolLayer {
        int window, stride;
    };
    struct ReluLayer {};
    struct FlattenLayer {};
    struct BnLayer {
        BatchNormState<T> state;
    };
    struct AbcLayer {};
    struct TanhLayer {};
    using Layer = std::variant<LinearLayer, ConvLayer, PoolLayer, ReluLayer, FlattenLayer, BnLayer, AbcLayer,
                               TanhLayer>;

    void build(Rng* rng) {
        if (specs_.empty() || specs_[0].kind != LayerKind::Input) {
            throw ConfigError("architecture: must start with an input:<dims> layer");
        }
        if (specs_[0].args.size() != 1 && specs_[0].args.size() != 3) {
            throw ConfigError("architecture: input takes 1 (flat) or 3 (CxHxW) dimensions");
        }
        input_shape_ = specs_[0].args;
        std::vector<int> shape = input_shape_;  // without the batch axis
        int layer_index = 0;
        for (std::size_t si = 1; si < specs_.size(); ++si) {
            const LayerSpec& s = specs_[si];
            const std::string at = " at layer " + std::to_string(si) + " (" + s.to_token() + ")";
            switch (s.kind) {
                case LayerKind::Input: throw ConfigError("architecture: input only allowed first");
                case LayerKind::Linear: {
                    if (shape.size() != 1) {
                        throw ConfigError("architecture: linear needs a flat input (add flatten)" + at);
                    }
                    if (s.args.size() != 1 || s.args[0] < 1) throw ConfigError("architecture: linear:<out>" + at);
                    LinearLayer lin;
                    const int in = shape[0], out = s.args[0];
                    lin.weight = Parameter<T>("linear" + std::to_string(layer_index) + ".weight",
                                              Tensor<T>({in, out}));
                    lin.bias = Parameter<T>("linear" + std::to_string(layer_index) + ".bias", Tensor<T>({out}));
                    if (rng) xavier_fill(lin.weight.value, in, out, *rng);
                    layers_.push_back(std::move(lin));
                    shape = {out};
                    break;
                }
                case LayerKind::Conv: {
                    if (shape.size() != 3) throw ConfigError("architecture: conv needs a CxHxW input" + at);
                    if (s.args.size() != 4) {
                        throw ConfigError("architecture: conv:<filters>,<kernel>,<stride>,<pad>" + at);
                    }
                    const int filters = s.args[0], kernel = s.args[1], stride = s.args[2], pad = s.args[3];
                    if (filters < 1 || kernel < 1 || stride < 1 || pad < 0) {
                        throw ConfigError("architecture: bad conv arguments" + at);
                    }
                    ConvLayer conv;
                    conv.stride = stride;
                    conv.pad = pad;
                    conv.kernel = Parameter<T>("conv" + std::to_string(layer_index) + ".kernel",
                                               Tensor<T>({filters, shape[0], kernel, kernel}));
                    conv.bias = Parameter<T>("conv" + std::to_string(layer_index) + ".bias",
                                             Tensor<T>({filters}));
                    if (rng) {
                        xavier_fill(conv.kernel.value, shape[0] * kernel * kernel, filters * kernel * kernel,
                                    *rng);
                    }
                    const int oh = conv_output_extent(shape[1], kernel, stride, pad);
                    const int ow = conv_output_extent(shape[2], kernel, stride, pad);
                    if (oh < 1 || ow < 1) throw ConfigError("architecture: conv output collapses" + at);
                    layers_.push_back(std::move(conv));
                    shape = {filters, oh, ow};
                    break;
                }
                case LayerKind::MaxPool: {
                    if (shape.size() != 3) throw ConfigError("architecture: maxpool needs a CxHxW input" + at);
                    if (s.args.size() != 2 || s.args[0] < 1 || s.args[1] < 1) {
                        throw ConfigError("architecture: maxpool:<window>,<stride>" + at);
                    }
                    const int window = s.args[0], stride = s.args[1];
                    if (window > shape[1] || window > shape[2]) {
                        throw ConfigError("architecture: maxpool window exceeds input" + at);
                    }
                    layers_.push_back(PoolLayer{window, stride});
                    shape = {shape[0], (shape[1] - window) / stride + 1, (shape[2] - window) / stride + 1};
                    break;
                }
                case LayerKind::Relu:
                    layers_.push_back(ReluLayer{});
                    break;
                case LayerKind::Flatten: {
                    if (shape.size() == 1) throw ConfigError("architecture: flatten needs an image input" + at);
                    layers_.push_back(FlattenLayer{});
                    shape = {shape[0] * shape[1] * shape[2]};
                    break;
                }
                case LayerKind::BatchNorm: {
                    layers_.push_back(BnLayer{BatchNormState<T>(shape[0], "bn" + std::to_string(layer_index))});
                    break;
                }
                case LayerKind::Abc:
                case LayerKind::ScaledTanh: {
                    if (shape.size() != 1) {
                        throw ConfigError("architecture: binarizing activation needs a flat input" + at);
                    }
                    if (s.kind == LayerKind::Abc) {
                        if (si < 1 || specs_[si - 1].kind != LayerKind::BatchNorm) {
                            throw ConfigError(
                                "architecture: abc requires a batchnorm layer immediately before it" + at);
                        }
                        layers_.push_back(AbcLayer{});
                    } else {
                        layers_.push_back(TanhLayer{});
                    }
                    code_bits_ = shape[0];
                    break;
                }
            }
            ++layer_index;
        }
        if (!has_binarizer() && shape.size() == 1) code_bits_ = shape[0];
    }

    static void write_u32(std::ostream& os, std::uint32_t v) {
        char b[4] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                     static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
        os.write(b, 4);
    }
    static std::uint32_t read_u32(std::istream& is) {
        unsigned char b[4];
        is.read(reinterpret_cast<char*>(b), 4);
        if (!is) throw FormatError("model: truncated file");
        return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
               (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    }
    static void write_f64(std::ostream& os, double v) {
        static_assert(sizeof(double) == 8);
        os.write(reinterpret_cast<const char*>(&v), 8);
    }
    static double read_f64(std::istream& is) {
        double v;
        is.read(reinterpret_cast<char*>(&v), 8);
        if (!is) throw FormatError("model: truncated file");
        return v;
    }
    static void write_tensor(std::ostream& os, const Tensor<T>& t) {
        write_u32(os, static_cast<std::uint32_t>(t.rank()));
        for (int d : t.shape()) write_u32(os, static_cast<std::uint32_t>(d));
        for (std::int64_t i = 0; i < t.size(); ++i) {
            const float v = static_cast<float>(t[i]);
            static_assert(sizeof(float) == 4);
            os.write(reinterpret_cast<const char*>(&v), 4);
        }
    }
    static void read_tensor(std::istream& is, Tensor<T>& t) {
        const std::uint32_t rank = read_u32(is);
        std::vector<int> shape(rank);
        for (std::uint32_t i = 0; i < rank; ++i) shape[i] = static_cast<int>(read_u32(is));
        if (shape != t.shape()) throw FormatError("model: parameter shape mismatch");
        for (std::int64_t i = 0; i < t.size(); ++i) {
            float v;
            is.read(reinterpret_cast<char*>(&v), 4);
            t[i] = static_cast<T>(v);
        }
    }

    std::vector<LayerSpec> specs_;
    std::vector<Layer> layers_;
    std::vector<int> input_shape_;
    int code_bits_ = 0;
};

}  // namespace abc
