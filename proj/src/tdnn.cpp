#include "setl/tdnn.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "setl/error.hpp"
#include "setl/kernels.hpp"

namespace setl {

std::string_view to_string(Activation a) { return a == Activation::rectifier ? "rectifier" : "identity"; }

std::string_view to_string(LayerRole r) {
  switch (r) {
    case LayerRole::tdnn: return "tdnn";
    case LayerRole::prefinal: return "prefinal";
    case LayerRole::head_hidden: return "head_hidden";
    case LayerRole::output: return "output";
  }
  return "unknown";
}

void NetworkSpec::validate() const {
  const auto bad = [](const std::string& m) { fail(ErrorKind::invalid_argument, "network spec: " + m); };
  if (layers.empty()) bad("no layers");
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const auto& l = layers[k];
    const std::string where = "layer " + std::to_string(k) + " (" + l.name + ")";
    if (l.input_dim < 1 || l.output_dim < 1) bad(where + " has a non-positive dimension");
    if (l.context_offsets.empty()) bad(where + " has no context offsets");
    if (!std::is_sorted(l.context_offsets.begin(), l.context_offsets.end()) ||
        std::adjacent_find(l.context_offsets.begin(), l.context_offsets.end()) != l.context_offsets.end()) {
      bad(where + " offsets must be strictly increasing");
    }
    if (!std::binary_search(l.context_offsets.begin(), l.context_offsets.end(), 0)) {
      bad(where + " offsets must contain 0");
    }
    if (k > 0 && l.input_dim != layers[k - 1].output_dim) bad(where + " input dim does not chain");
  }
}

int NetworkSpec::num_tdnn_layers() const {
  return static_cast<int>(std::count_if(layers.begin(), layers.end(),
                                        [](const LayerSpec& l) { return l.role == LayerRole::tdnn; }));
}

std::optional<int> NetworkSpec::prefinal_index() const {
  for (std::size_t k = 0; k < layers.size(); ++k) {
    if (layers[k].role == LayerRole::prefinal) return static_cast<int>(k);
  }
  return std::nullopt;
}

int NetworkSpec::prefinal_dim() const {
  const auto idx = prefinal_index();
  return idx ? layers[*idx].output_dim : 0;
}

std::vector<int> stride_offsets(int stride) {
  if (stride < 0) fail(ErrorKind::invalid_argument, "stride must be non-negative");
  if (stride == 0) return {0};
  return {-stride, 0, stride};
}

NetworkSpec paper_default_spec(const SpecOptions& opts) {
  if (!(opts.width_factor > 0.0)) fail(ErrorKind::invalid_argument, "width factor must be positive");
  const int width = std::max(1, static_cast<int>(std::lround(opts.base_width * opts.width_factor)));
  if (opts.strides.empty()) fail(ErrorKind::invalid_argument, "stride schedule is empty");
  NetworkSpec spec;
  int in = opts.input_dim;
  for (std::size_t k = 0; k < opts.strides.size(); ++k) {
    spec.layers.push_back({"tdnn" + std::to_string(k + 1), LayerRole::tdnn, in, width, stride_offsets(opts.strides[k]),
                           Activation::rectifier});
    in = width;
  }
  spec.layers.push_back({"prefinal", LayerRole::prefinal, in, width, {0}, Activation::rectifier});
  spec.layers.push_back({"output", LayerRole::output, width, opts.head_dim, {0}, Activation::identity});
  spec.validate();
  return spec;
}

ReceptiveField receptive_field(const NetworkSpec& spec) {
  ReceptiveField rf;
  for (const auto& l : spec.layers) {
    rf.left += -std::min(0, l.context_offsets.front());
    rf.right += std::max(0, l.context_offsets.back());
  }
  return rf;
}

Network Network::initialize(const NetworkSpec& spec, std::uint64_t seed) {
  spec.validate();
  Network net;
  net.spec = spec;
  std::mt19937_64 rng(seed);
  for (const auto& l : spec.layers) {
    const int fan_in = l.spliced_dim();
    // He-uniform keeps activation variance roughly constant through a deep
    // rectifier stack; the linear output layer uses Glorot-uniform.
    const double limit = l.activation == Activation::rectifier
                             ? std::sqrt(6.0 / static_cast<double>(fan_in))
                             : std::sqrt(6.0 / static_cast<double>(fan_in + l.output_dim));
    std::uniform_real_distribution<double> dist(-limit, limit);
    LayerParams p{Matrix(fan_in, l.output_dim), std::vector<double>(l.output_dim, 0.0)};
    for (double& w : p.weights.values()) w = dist(rng);
    net.params.push_back(std::move(p));
  }
  net.input_shift.assign(spec.input_dim(), 0.0);
  net.input_scale.assign(spec.input_dim(), 1.0);
  return net;
}

std::size_t Network::num_parameters() const {
  std::size_t n = 0;
  for (const auto& p : params) n += p.weights.size() + p.bias.size();
  return n;
}

void Network::validate() const {
  spec.validate();
  if (params.size() != spec.layers.size()) fail(ErrorKind::dimension_mismatch, "network: parameter count mismatch");
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& l = spec.layers[k];
    const auto& p = params[k];
    if (p.weights.rows() != static_cast<std::size_t>(l.spliced_dim()) ||
        p.weights.cols() != static_cast<std::size_t>(l.output_dim) ||
        p.bias.size() != static_cast<std::size_t>(l.output_dim)) {
      fail(ErrorKind::dimension_mismatch, "network: parameter shape mismatch in layer " + l.name);
    }
    for (double v : p.weights.values()) {
      if (!std::isfinite(v)) fail(ErrorKind::numeric, "network: non-finite weight in layer " + l.name);
    }
    for (double v : p.bias) {
      if (!std::isfinite(v)) fail(ErrorKind::numeric, "network: non-finite bias in layer " + l.name);
    }
  }
  if (input_shift.size() != static_cast<std::size_t>(spec.input_dim()) || input_scale.size() != input_shift.size()) {
    fail(ErrorKind::dimension_mismatch, "network: input transform size mismatch");
  }
}

Gradients zero_gradients(const Network& net) {
  Gradients g;
  g.reserve(net.params.size());
  for (const auto& p : net.params) {
    g.push_back({Matrix(p.weights.rows(), p.weights.cols()), std::vector<double>(p.bias.size(), 0.0)});
  }
  return g;
}

std::size_t ActivationTrace::evaluations() const {
  std::size_t n = 0;
  for (const auto& f : frames) n += f.size();
  return n;
}

int ActivationTrace::row_of(std::size_t layer, int frame) const {
  const auto& f = frames.at(layer);
  const auto it = std::lower_bound(f.begin(), f.end(), frame);
  return (it != f.end() && *it == frame) ? static_cast<int>(it - f.begin()) : -1;
}

namespace {

int clamp_frame(int t, std::size_t num_frames) {
  return std::clamp(t, 0, static_cast<int>(num_frames) - 1);
}

std::vector<int> all_frames(std::size_t n) {
  std::vector<int> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<int>(i);
  return v;
}

// Frames of the layer below needed to evaluate `frames` with `offsets`.
std::vector<int> needed_inputs(const std::vector<int>& frames, const std::vector<int>& offsets, std::size_t n) {
  std::vector<char> mark(n, 0);
  for (int t : frames) {
    for (int o : offsets) mark[clamp_frame(t + o, n)] = 1;
  }
  std::vector<int> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (mark[i]) out.push_back(static_cast<int>(i));
  }
  return out;
}

// Row lookup: utterance frame -> row in a sorted frame list.
std::vector<int> row_lookup(const std::vector<int>& frames, std::size_t n) {
  std::vector<int> lut(n, -1);
  for (std::size_t r = 0; r < frames.size(); ++r) lut[frames[r]] = static_cast<int>(r);
  return lut;
}

Matrix splice(const Matrix& below, const std::vector<int>& below_lut, const std::vector<int>& frames,
              const std::vector<int>& offsets, std::size_t n) {
  const std::size_t dim = below.cols();
  Matrix out(frames.size(), dim * offsets.size());
  for (std::size_t r = 0; r < frames.size(); ++r) {
    auto dst = out.row(r);
    for (std::size_t j = 0; j < offsets.size(); ++j) {
      const int src = below_lut[clamp_frame(frames[r] + offsets[j], n)];
      const auto s = below.row(static_cast<std::size_t>(src));
      std::copy(s.begin(), s.end(), dst.begin() + static_cast<std::ptrdiff_t>(j * dim));
    }
  }
  return out;
}

void apply_activation(Activation a, Matrix& m) {
  if (a == Activation::rectifier) {
    for (double& v : m.values()) v = v > 0.0 ? v : 0.0;
  }
}

const Matrix& layer_input(const ActivationTrace& trace, std::size_t k) {
  return k == 0 ? trace.input : trace.outputs[k - 1];
}

const std::vector<int>& layer_input_frames(const ActivationTrace& trace, std::size_t k) {
  return k == 0 ? trace.input_frames : trace.frames[k - 1];
}

}  // namespace

ActivationTrace forward(const Network& net, const FeatureMatrix& x, const ForwardOptions& opts) {
  const auto& layers = net.spec.layers;
  if (x.dim() != static_cast<std::size_t>(net.spec.input_dim())) {
    fail(ErrorKind::dimension_mismatch, "forward: input dim " + std::to_string(x.dim()) + ", network expects " +
                                            std::to_string(net.spec.input_dim()));
  }
  if (x.num_frames() < 1) fail(ErrorKind::invalid_argument, "forward: empty utterance");
  const int last = opts.last_layer < 0 ? static_cast<int>(layers.size()) - 1 : opts.last_layer;
  if (last >= static_cast<int>(layers.size())) fail(ErrorKind::invalid_argument, "forward: last_layer out of range");
  const std::size_t n = x.num_frames();

  ActivationTrace trace;
  trace.num_frames = n;
  trace.frames.resize(static_cast<std::size_t>(last) + 1);
  trace.outputs.resize(static_cast<std::size_t>(last) + 1);

  if (opts.mode == ForwardMode::dense) {
    for (auto& f : trace.frames) f = all_frames(n);
    trace.input_frames = all_frames(n);
  } else {
    std::vector<int> top = opts.requested_frames.empty() ? all_frames(n) : opts.requested_frames;
    std::sort(top.begin(), top.end());
    top.erase(std::unique(top.begin(), top.end()), top.end());
    if (top.front() < 0 || top.back() >= static_cast<int>(n)) {
      fail(ErrorKind::invalid_argument, "forward: requested frame out of range");
    }
    trace.frames[last] = std::move(top);
    for (int k = last; k > 0; --k) {
      trace.frames[k - 1] = needed_inputs(trace.frames[k], layers[k].context_offsets, n);
    }
    trace.input_frames = needed_inputs(trace.frames[0], layers[0].context_offsets, n);
  }

  trace.input.resize(trace.input_frames.size(), x.dim());
  for (std::size_t r = 0; r < trace.input_frames.size(); ++r) {
    const auto src = x.frames.row(static_cast<std::size_t>(trace.input_frames[r]));
    auto dst = trace.input.row(r);
    for (std::size_t d = 0; d < x.dim(); ++d) {
      if (!std::isfinite(src[d])) fail(ErrorKind::numeric, "forward: non-finite input");
      dst[d] = (src[d] - net.input_shift[d]) * net.input_scale[d];
    }
  }

  for (int k = 0; k <= last; ++k) {
    const auto& below_frames = layer_input_frames(trace, k);
    const Matrix spliced = splice(layer_input(trace, k), row_lookup(below_frames, n), trace.frames[k],
                                  layers[k].context_offsets, n);
    kernels::affine_forward(spliced, net.params[k].weights, net.params[k].bias, trace.outputs[k]);
    apply_activation(layers[k].activation, trace.outputs[k]);
  }
  return trace;
}

void backward_accumulate(const Network& net, const ActivationTrace& trace, const Matrix& output_grad,
                         Gradients& grads, int lowest_layer) {
  const auto& layers = net.spec.layers;
  const int last = static_cast<int>(trace.outputs.size()) - 1;
  if (last < 0 || grads.size() != net.params.size()) fail(ErrorKind::dimension_mismatch, "backward: trace/net mismatch");
  if (output_grad.rows() != trace.frames[last].size() ||
      output_grad.cols() != static_cast<std::size_t>(layers[last].output_dim)) {
    fail(ErrorKind::dimension_mismatch, "backward: output gradient shape does not match the trace");
  }
  const std::size_t n = trace.num_frames;
  lowest_layer = std::max(lowest_layer, 0);

  Matrix delta = output_grad;
  for (int k = last; k >= lowest_layer; --k) {
    const auto& out = trace.outputs[k];
    if (out.rows() != delta.rows()) fail(ErrorKind::dimension_mismatch, "backward: trace/net mismatch");
    if (layers[k].activation == Activation::rectifier) {
      for (std::size_t i = 0; i < delta.size(); ++i) {
        if (!(out.values()[i] > 0.0)) delta.values()[i] = 0.0;
      }
    }
    const auto& below_frames = layer_input_frames(trace, k);
    const auto lut = row_lookup(below_frames, n);
    const Matrix spliced = splice(layer_input(trace, k), lut, trace.frames[k], layers[k].context_offsets, n);
    kernels::affine_backward_params(spliced, delta, grads[k].weights, grads[k].bias);
    if (k == lowest_layer) break;

    Matrix d_spliced;
    kernels::affine_backward_input(delta, net.params[k].weights, d_spliced);
    const std::size_t dim = static_cast<std::size_t>(layers[k].input_dim);
    Matrix below_grad(below_frames.size(), dim);
    const auto& offsets = layers[k].context_offsets;
    const auto& frames = trace.frames[k];
    for (std::size_t r = 0; r < frames.size(); ++r) {
      const auto src = d_spliced.row(r);
      for (std::size_t j = 0; j < offsets.size(); ++j) {
        auto dst = below_grad.row(static_cast<std::size_t>(lut[clamp_frame(frames[r] + offsets[j], n)]));
        for (std::size_t d = 0; d < dim; ++d) dst[d] += src[j * dim + d];
      }
    }
    delta = std::move(below_grad);
  }
}

Gradients backward(const Network& net, const ActivationTrace& trace, const Matrix& output_grad, int lowest_layer) {
  Gradients g = zero_gradients(net);
  backward_accumulate(net, trace, output_grad, g, lowest_layer);
  return g;
}

FeatureMatrix forward_bottleneck(const Network& net, const FeatureMatrix& x, int tap) {
  if (tap < 0 || tap >= static_cast<int>(net.spec.layers.size())) {
    fail(ErrorKind::invalid_argument, "forward_bottleneck: invalid tap " + std::to_string(tap));
  }
  ForwardOptions opts;
  opts.last_layer = tap;
  auto trace = forward(net, x, opts);
  return FeatureMatrix{x.utterance_id, std::move(trace.outputs[tap])};
}

int resolve_tap(const NetworkSpec& spec, std::string_view tap) {
  if (tap == "prefinal") {
    const auto idx = spec.prefinal_index();
    if (!idx) fail(ErrorKind::invalid_argument, "network has no prefinal layer");
    return *idx;
  }
  if (tap.starts_with("tdnn")) {
    const std::string digits(tap.substr(4));
    if (!digits.empty() && std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; })) {
      const int k = std::stoi(digits);
      int seen = 0;
      for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        if (spec.layers[i].role == LayerRole::tdnn && ++seen == k) return static_cast<int>(i);
      }
      fail(ErrorKind::invalid_argument, "network has no TDNN layer " + digits);
    }
  }
  fail(ErrorKind::invalid_argument, "unknown tap '" + std::string(tap) + "' (use tdnnN or prefinal)");
}

}  // namespace setl
