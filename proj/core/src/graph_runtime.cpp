#include "tmiqa/graph_runtime.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>
#include <unordered_map>
#include <variant>

#include <Eigen/Core>

#include "onnx.pb.h"
#include "tmiqa/error.hpp"

namespace tmiqa {

namespace {

struct ConstTensor {
  std::vector<std::int64_t> dims;
  std::vector<float> data;
};

struct ConvOp {
  std::int64_t kernel_h = 0, kernel_w = 0;
  std::int64_t stride_h = 1, stride_w = 1;
  std::int64_t dil_h = 1, dil_w = 1;
  std::int64_t pad_top = 0, pad_left = 0, pad_bottom = 0, pad_right = 0;
  std::int64_t group = 1;
};

struct MaxPoolOp {
  std::int64_t kernel_h = 0, kernel_w = 0;
  std::int64_t stride_h = 1, stride_w = 1;
  std::int64_t dil_h = 1, dil_w = 1;
  std::int64_t pad_top = 0, pad_left = 0, pad_bottom = 0, pad_right = 0;
};

struct BatchNormOp {
  float epsilon = 1e-5f;
};

struct ReluOp {};
struct AddOp {};
struct IdentityOp {};

using OpParams = std::variant<ConvOp, MaxPoolOp, BatchNormOp, ReluOp, AddOp, IdentityOp>;

struct Node {
  std::string name;
  OpParams op;
  std::vector<std::string> inputs;
  std::string output;
};

Error malformed(const std::string& origin, const std::string& what) {
  return Error(Errc::kGraphExecutionFailure, origin + ": " + what);
}

ConstTensor read_tensor(const onnx::TensorProto& t, const std::string& origin) {
  if (t.data_type() != onnx::TensorProto::FLOAT) {
    throw Error(Errc::kUnsupportedGraphVersion,
                origin + ": tensor '" + t.name() + "' is not float32");
  }
  if (t.data_location() == onnx::TensorProto::EXTERNAL) {
    throw Error(Errc::kUnsupportedGraphVersion,
                origin + ": external tensor data is not supported ('" + t.name() + "')");
  }
  ConstTensor out;
  out.dims.assign(t.dims().begin(), t.dims().end());
  std::size_t count = 1;
  for (auto d : out.dims) {
    if (d < 0) throw malformed(origin, "negative dimension in '" + t.name() + "'");
    count *= static_cast<std::size_t>(d);
  }
  if (t.has_raw_data()) {
    const std::string& raw = t.raw_data();
    if (raw.size() != count * sizeof(float)) {
      throw malformed(origin, "raw data size mismatch in '" + t.name() + "'");
    }
    out.data.resize(count);
    // ONNX raw_data is little-endian, as is every supported host.
    std::memcpy(out.data.data(), raw.data(), raw.size());
  } else {
    if (static_cast<std::size_t>(t.float_data_size()) != count) {
      throw malformed(origin, "float data size mismatch in '" + t.name() + "'");
    }
    out.data.assign(t.float_data().begin(), t.float_data().end());
  }
  return out;
}

const onnx::AttributeProto* find_attr(const onnx::NodeProto& n, const std::string& name) {
  for (const auto& a : n.attribute()) {
    if (a.name() == name) return &a;
  }
  return nullptr;
}

std::vector<std::int64_t> ints_attr(const onnx::NodeProto& n, const std::string& name,
                                    std::vector<std::int64_t> fallback) {
  const auto* a = find_attr(n, name);
  if (a == nullptr) return fallback;
  return {a->ints().begin(), a->ints().end()};
}

std::int64_t int_attr(const onnx::NodeProto& n, const std::string& name, std::int64_t fallback) {
  const auto* a = find_attr(n, name);
  return a == nullptr ? fallback : a->i();
}

template <typename Op>
void read_window(const onnx::NodeProto& n, const std::string& origin, Op& op) {
  const auto* auto_pad = find_attr(n, "auto_pad");
  if (auto_pad != nullptr && auto_pad->s() != "NOTSET" && !auto_pad->s().empty()) {
    throw Error(Errc::kUnsupportedGraphVersion,
                origin + ": auto_pad=" + auto_pad->s() + " on node '" + n.name() + "'");
  }
  const auto strides = ints_attr(n, "strides", {1, 1});
  const auto dilations = ints_attr(n, "dilations", {1, 1});
  const auto pads = ints_attr(n, "pads", {0, 0, 0, 0});
  if (strides.size() != 2 || dilations.size() != 2 || pads.size() != 4) {
    throw Error(Errc::kUnsupportedGraphVersion,
                origin + ": only 2-D windows are supported (node '" + n.name() + "')");
  }
  op.stride_h = strides[0];
  op.stride_w = strides[1];
  op.dil_h = dilations[0];
  op.dil_w = dilations[1];
  op.pad_top = pads[0];
  op.pad_left = pads[1];
  op.pad_bottom = pads[2];
  op.pad_right = pads[3];
  if (op.stride_h < 1 || op.stride_w < 1 || op.dil_h < 1 || op.dil_w < 1) {
    throw malformed(origin, "non-positive stride or dilation on node '" + n.name() + "'");
  }
}

std::int64_t window_output(std::int64_t in, std::int64_t pad_a, std::int64_t pad_b,
                           std::int64_t kernel, std::int64_t dil, std::int64_t stride) {
  const std::int64_t span = dil * (kernel - 1) + 1;
  const std::int64_t avail = in + pad_a + pad_b - span;
  if (avail < 0) return 0;
  return avail / stride + 1;
}

}  // namespace

struct OnnxGraph::Impl {
  std::string origin;
  std::string input;
  std::vector<std::string> outputs;
  std::vector<Node> nodes;
  std::unordered_map<std::string, ConstTensor> constants;
  std::unordered_map<std::string, std::size_t> producer;

  const ConstTensor& constant(const Node& n, std::size_t slot) const {
    if (slot >= n.inputs.size()) throw malformed(origin, "node '" + n.name + "' lacks input");
    auto it = constants.find(n.inputs[slot]);
    if (it == constants.end()) {
      throw malformed(origin, "node '" + n.name + "' expects constant '" + n.inputs[slot] + "'");
    }
    return it->second;
  }

  ChwTensor conv(const Node& n, const ConvOp& op, const ChwTensor& x) const;
  ChwTensor max_pool(const Node& n, const MaxPoolOp& op, const ChwTensor& x) const;
  ChwTensor batch_norm(const Node& n, const BatchNormOp& op, const ChwTensor& x) const;
};

ChwTensor OnnxGraph::Impl::conv(const Node& n, const ConvOp& op, const ChwTensor& x) const {
  const ConstTensor& w = constant(n, 1);
  if (w.dims.size() != 4) throw malformed(origin, "conv weight of '" + n.name + "' is not 4-D");
  const auto out_ch = static_cast<std::size_t>(w.dims[0]);
  const auto in_per_group = static_cast<std::size_t>(w.dims[1]);
  const auto kh = w.dims[2];
  const auto kw = w.dims[3];
  const auto group = static_cast<std::size_t>(op.group);
  if (in_per_group * group != x.channels || out_ch % group != 0) {
    throw Error(Errc::kGraphExecutionFailure,
                origin + ": channel mismatch at node '" + n.name + "' (input has " +
                    std::to_string(x.channels) + " channels)");
  }
  const ConstTensor* bias = nullptr;
  if (n.inputs.size() > 2 && !n.inputs[2].empty()) {
    bias = &constant(n, 2);
    if (bias->data.size() != out_ch) throw malformed(origin, "bad bias on '" + n.name + "'");
  }

  const auto in_h = static_cast<std::int64_t>(x.height);
  const auto in_w = static_cast<std::int64_t>(x.width);
  const auto oh = window_output(in_h, op.pad_top, op.pad_bottom, kh, op.dil_h, op.stride_h);
  const auto ow = window_output(in_w, op.pad_left, op.pad_right, kw, op.dil_w, op.stride_w);
  if (oh <= 0 || ow <= 0) {
    throw Error(Errc::kInputTooSmall, origin + ": input " + std::to_string(x.height) + "x" +
                                          std::to_string(x.width) + " too small at node '" +
                                          n.name + "'");
  }

  ChwTensor y{out_ch, static_cast<std::size_t>(oh), static_cast<std::size_t>(ow), {}};
  const std::size_t out_pixels = y.height * y.width;
  y.data.assign(out_ch * out_pixels, 0.0f);

  const std::size_t patch = in_per_group * static_cast<std::size_t>(kh * kw);
  const std::size_t out_per_group = out_ch / group;
  std::vector<float> columns(patch * out_pixels);

  using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  for (std::size_t g = 0; g < group; ++g) {
    // im2col: row = (channel, ky, kx), column = output pixel.
    for (std::size_t c = 0; c < in_per_group; ++c) {
      const float* plane = &x.data[(g * in_per_group + c) * x.height * x.width];
      for (std::int64_t ky = 0; ky < kh; ++ky) {
        for (std::int64_t kx = 0; kx < kw; ++kx) {
          float* dst = &columns[((c * kh + ky) * kw + kx) * out_pixels];
          for (std::int64_t oy = 0; oy < oh; ++oy) {
            const std::int64_t iy = oy * op.stride_h - op.pad_top + ky * op.dil_h;
            for (std::int64_t ox = 0; ox < ow; ++ox) {
              const std::int64_t ix = ox * op.stride_w - op.pad_left + kx * op.dil_w;
              const bool inside = iy >= 0 && iy < in_h && ix >= 0 && ix < in_w;
              dst[oy * ow + ox] = inside ? plane[iy * in_w + ix] : 0.0f;
            }
          }
        }
      }
    }
    Eigen::Map<const RowMatrix> weights(&w.data[g * out_per_group * patch],
                                        static_cast<Eigen::Index>(out_per_group),
                                        static_cast<Eigen::Index>(patch));
    Eigen::Map<const RowMatrix> cols(columns.data(), static_cast<Eigen::Index>(patch),
                                     static_cast<Eigen::Index>(out_pixels));
    Eigen::Map<RowMatrix> out(&y.data[g * out_per_group * out_pixels],
                              static_cast<Eigen::Index>(out_per_group),
                              static_cast<Eigen::Index>(out_pixels));
    out.noalias() = weights * cols;
  }
  if (bias != nullptr) {
    for (std::size_t m = 0; m < out_ch; ++m) {
      float* plane = &y.data[m * out_pixels];
      for (std::size_t i = 0; i < out_pixels; ++i) plane[i] += bias->data[m];
    }
  }
  return y;
}

ChwTensor OnnxGraph::Impl::max_pool(const Node& n, const MaxPoolOp& op,
                                    const ChwTensor& x) const {
  const auto in_h = static_cast<std::int64_t>(x.height);
  const auto in_w = static_cast<std::int64_t>(x.width);
  const auto oh = window_output(in_h, op.pad_top, op.pad_bottom, op.kernel_h, op.dil_h, op.stride_h);
  const auto ow = window_output(in_w, op.pad_left, op.pad_right, op.kernel_w, op.dil_w, op.stride_w);
  if (oh <= 0 || ow <= 0) {
    throw Error(Errc::kInputTooSmall, origin + ": input " + std::to_string(x.height) + "x" +
                                          std::to_string(x.width) + " too small at node '" +
                                          n.name + "'");
  }
  ChwTensor y{x.channels, static_cast<std::size_t>(oh), static_cast<std::size_t>(ow), {}};
  y.data.resize(y.channels * y.height * y.width);
  for (std::size_t c = 0; c < x.channels; ++c) {
    const float* plane = &x.data[c * x.height * x.width];
    float* dst = &y.data[c * y.height * y.width];
    for (std::int64_t oy = 0; oy < oh; ++oy) {
      for (std::int64_t ox = 0; ox < ow; ++ox) {
        float best = -std::numeric_limits<float>::infinity();
        for (std::int64_t ky = 0; ky < op.kernel_h; ++ky) {
          const std::int64_t iy = oy * op.stride_h - op.pad_top + ky * op.dil_h;
          if (iy < 0 || iy >= in_h) continue;
          for (std::int64_t kx = 0; kx < op.kernel_w; ++kx) {
            const std::int64_t ix = ox * op.stride_w - op.pad_left + kx * op.dil_w;
            if (ix < 0 || ix >= in_w) continue;
            best = std::max(best, plane[iy * in_w + ix]);
          }
        }
        dst[oy * ow + ox] = best;
      }
    }
  }
  return y;
}

ChwTensor OnnxGraph::Impl::batch_norm(const Node& n, const BatchNormOp& op,
                                      const ChwTensor& x) const {
  const auto& scale = constant(n, 1).data;
  const auto& shift = constant(n, 2).data;
  const auto& mean = constant(n, 3).data;
  const auto& var = constant(n, 4).data;
  if (scale.size() != x.channels || shift.size() != x.channels || mean.size() != x.channels ||
      var.size() != x.channels) {
    throw Error(Errc::kGraphExecutionFailure,
                origin + ": channel mismatch at batch norm '" + n.name + "'");
  }
  ChwTensor y = x;
  const std::size_t plane = x.height * x.width;
  for (std::size_t c = 0; c < x.channels; ++c) {
    const float inv = 1.0f / std::sqrt(var[c] + op.epsilon);
    const float a = scale[c] * inv;
    const float b = shift[c] - mean[c] * a;
    float* p = &y.data[c * plane];
    for (std::size_t i = 0; i < plane; ++i) p[i] = p[i] * a + b;
  }
  return y;
}

OnnxGraph::OnnxGraph(std::unique_ptr<Impl> impl) : impl_(std::move(impl)) {}
OnnxGraph::OnnxGraph(OnnxGraph&&) noexcept = default;
OnnxGraph& OnnxGraph::operator=(OnnxGraph&&) noexcept = default;
OnnxGraph::~OnnxGraph() = default;

OnnxGraph OnnxGraph::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::kPackageNotFound, "cannot open graph file " + path.string());
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse(std::as_bytes(std::span<const char>(buf)), path.string());
}

OnnxGraph OnnxGraph::parse(std::span<const std::byte> bytes, const std::string& origin) {
  onnx::ModelProto model;
  if (bytes.size() > static_cast<std::size_t>(std::numeric_limits<int>::max()) ||
      !model.ParseFromArray(bytes.data(), static_cast<int>(bytes.size()))) {
    throw malformed(origin, "not a valid ONNX model");
  }
  if (model.ir_version() < 3 || model.ir_version() > kMaxIrVersion) {
    throw Error(Errc::kUnsupportedGraphVersion,
                origin + ": IR version " + std::to_string(model.ir_version()));
  }
  for (const auto& opset : model.opset_import()) {
    if ((opset.domain().empty() || opset.domain() == "ai.onnx") && opset.version() > kMaxOpset) {
      throw Error(Errc::kUnsupportedGraphVersion,
                  origin + ": opset " + std::to_string(opset.version()));
    }
  }

  auto impl = std::make_unique<Impl>();
  impl->origin = origin;
  const auto& g = model.graph();
  for (const auto& t : g.initializer()) impl->constants.emplace(t.name(), read_tensor(t, origin));

  std::vector<std::string> runtime_inputs;
  for (const auto& vi : g.input()) {
    if (!impl->constants.contains(vi.name())) runtime_inputs.push_back(vi.name());
  }
  if (runtime_inputs.size() != 1) {
    throw Error(Errc::kUnsupportedGraphVersion,
                origin + ": expected exactly one runtime input, found " +
                    std::to_string(runtime_inputs.size()));
  }
  impl->input = runtime_inputs.front();
  for (const auto& vi : g.output()) impl->outputs.push_back(vi.name());

  for (const auto& np : g.node()) {
    if (!np.domain().empty() && np.domain() != "ai.onnx") {
      throw Error(Errc::kUnsupportedGraphVersion,
                  origin + ": operator domain '" + np.domain() + "'");
    }
    if (np.output_size() < 1) throw malformed(origin, "node '" + np.name() + "' has no output");
    const std::string& type = np.op_type();
    if (type == "Constant") {
      const auto* value = find_attr(np, "value");
      if (value == nullptr || !value->has_t()) {
        throw Error(Errc::kUnsupportedGraphVersion,
                    origin + ": Constant node '" + np.name() + "' without tensor value");
      }
      impl->constants.emplace(np.output(0), read_tensor(value->t(), origin));
      continue;
    }

    Node node;
    node.name = np.name().empty() ? np.output(0) : np.name();
    node.inputs.assign(np.input().begin(), np.input().end());
    node.output = np.output(0);
    if (type == "Conv") {
      ConvOp op;
      read_window(np, origin, op);
      op.group = int_attr(np, "group", 1);
      if (op.group < 1) throw malformed(origin, "bad group on '" + node.name + "'");
      const auto& w = impl->constant(node, 1);
      if (w.dims.size() != 4) throw malformed(origin, "conv weight of '" + node.name + "'");
      op.kernel_h = w.dims[2];
      op.kernel_w = w.dims[3];
      node.op = op;
    } else if (type == "MaxPool") {
      MaxPoolOp op;
      read_window(np, origin, op);
      const auto kernel = ints_attr(np, "kernel_shape", {});
      if (kernel.size() != 2) throw malformed(origin, "MaxPool '" + node.name + "' kernel_shape");
      op.kernel_h = kernel[0];
      op.kernel_w = kernel[1];
      if (int_attr(np, "ceil_mode", 0) != 0 || np.output_size() > 1) {
        throw Error(Errc::kUnsupportedGraphVersion,
                    origin + ": MaxPool '" + node.name + "' uses ceil_mode or indices");
      }
      node.op = op;
    } else if (type == "BatchNormalization") {
      BatchNormOp op;
      if (const auto* eps = find_attr(np, "epsilon")) op.epsilon = eps->f();
      if (int_attr(np, "training_mode", 0) != 0) {
        throw Error(Errc::kUnsupportedGraphVersion,
                    origin + ": BatchNormalization '" + node.name + "' in training mode");
      }
      node.op = op;
    } else if (type == "Relu") {
      node.op = ReluOp{};
    } else if (type == "Add") {
      node.op = AddOp{};
    } else if (type == "Identity") {
      node.op = IdentityOp{};
    } else {
      throw Error(Errc::kUnsupportedGraphVersion,
                  origin + ": unsupported operator " + type + " ('" + node.name + "')");
    }
    impl->producer[node.output] = impl->nodes.size();
    impl->nodes.push_back(std::move(node));
  }
  return OnnxGraph(std::move(impl));
}

const std::string& OnnxGraph::input_name() const { return impl_->input; }

const std::vector<std::string>& OnnxGraph::output_names() const { return impl_->outputs; }

bool OnnxGraph::has_value(const std::string& name) const {
  return impl_->producer.contains(name) ||
         std::find(impl_->outputs.begin(), impl_->outputs.end(), name) != impl_->outputs.end();
}

std::map<std::string, ChwTensor> OnnxGraph::run(const ChwTensor& input,
                                                std::span<const std::string> outputs) const {
  const Impl& g = *impl_;
  if (input.data.size() != input.channels * input.height * input.width) {
    throw Error(Errc::kGraphExecutionFailure, g.origin + ": input buffer size mismatch");
  }

  // Mark the nodes that feed a requested output.
  std::vector<bool> needed(g.nodes.size(), false);
  std::vector<std::string> stack;
  for (const auto& name : outputs) {
    if (name != g.input && !g.producer.contains(name)) {
      throw Error(Errc::kGraphExecutionFailure, g.origin + ": no value named '" + name + "'");
    }
    stack.push_back(name);
  }
  while (!stack.empty()) {
    const std::string name = std::move(stack.back());
    stack.pop_back();
    auto it = g.producer.find(name);
    if (it == g.producer.end() || needed[it->second]) continue;
    needed[it->second] = true;
    for (const auto& in : g.nodes[it->second].inputs) stack.push_back(in);
  }

  std::unordered_map<std::string, std::size_t> last_use;
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    if (!needed[i]) continue;
    for (const auto& in : g.nodes[i].inputs) last_use[in] = i;
  }
  const std::set<std::string> keep(outputs.begin(), outputs.end());

  std::unordered_map<std::string, ChwTensor> values;
  values.emplace(g.input, input);

  auto fetch = [&](const Node& n, std::size_t slot) -> const ChwTensor& {
    auto it = values.find(n.inputs.at(slot));
    if (it == values.end()) {
      throw Error(Errc::kGraphExecutionFailure,
                  g.origin + ": node '" + n.name + "' input '" + n.inputs[slot] +
                      "' is not available (graph not topologically sorted?)");
    }
    return it->second;
  };

  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    if (!needed[i]) continue;
    const Node& n = g.nodes[i];
    ChwTensor result = std::visit(
        [&](const auto& op) -> ChwTensor {
          using T = std::decay_t<decltype(op)>;
          if constexpr (std::is_same_v<T, ConvOp>) {
            return g.conv(n, op, fetch(n, 0));
          } else if constexpr (std::is_same_v<T, MaxPoolOp>) {
            return g.max_pool(n, op, fetch(n, 0));
          } else if constexpr (std::is_same_v<T, BatchNormOp>) {
            return g.batch_norm(n, op, fetch(n, 0));
          } else if constexpr (std::is_same_v<T, ReluOp>) {
            ChwTensor y = fetch(n, 0);
            for (float& v : y.data) v = std::max(v, 0.0f);
            return y;
          } else if constexpr (std::is_same_v<T, AddOp>) {
            const ChwTensor& a = fetch(n, 0);
            const ChwTensor& b = fetch(n, 1);
            if (a.channels != b.channels || a.height != b.height || a.width != b.width) {
              throw Error(Errc::kGraphExecutionFailure,
                          g.origin + ": shape mismatch at Add '" + n.name + "'");
            }
            ChwTensor y = a;
            for (std::size_t k = 0; k < y.data.size(); ++k) y.data[k] += b.data[k];
            return y;
          } else {
            return fetch(n, 0);
          }
        },
        n.op);
    values[n.output] = std::move(result);

    for (const auto& in : n.inputs) {
      auto lu = last_use.find(in);
      if (lu != last_use.end() && lu->second == i && !keep.contains(in)) values.erase(in);
    }
  }

  std::map<std::string, ChwTensor> out;
  for (const auto& name : outputs) out[name] = values.at(name);
  return out;
}

}  // namespace tmiqa
