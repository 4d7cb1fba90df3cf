#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "setl/matrix.hpp"
#include "setl/mfcc.hpp"

namespace setl {

enum class Activation { rectifier, identity };
enum class LayerRole { tdnn, prefinal, head_hidden, output };

std::string_view to_string(Activation a);
std::string_view to_string(LayerRole r);

// One affine layer over spliced temporal context. The affine input at frame
// t is the concatenation of the previous layer's outputs at t + o for each
// offset o, in offset order.
struct LayerSpec {
  std::string name;
  LayerRole role = LayerRole::tdnn;
  int input_dim = 0;  // per-frame output dim of the previous layer
  int output_dim = 0;
  std::vector<int> context_offsets{0};
  Activation activation = Activation::rectifier;

  int spliced_dim() const { return input_dim * static_cast<int>(context_offsets.size()); }
  bool operator==(const LayerSpec&) const = default;
};

struct NetworkSpec {
  std::vector<LayerSpec> layers;

  // Throws Error(invalid_argument) on broken offsets or dimension chains.
  void validate() const;

  int input_dim() const { return layers.front().input_dim; }
  int output_dim() const { return layers.back().output_dim; }
  int num_tdnn_layers() const;
  // Index of the prefinal layer, if any.
  std::optional<int> prefinal_index() const;
  int prefinal_dim() const;
  int head_dim() const { return output_dim(); }

  bool operator==(const NetworkSpec&) const = default;
};

struct SpecOptions {
  double width_factor = 1.0;
  int base_width = 1024;
  int input_dim = 140;  // 40 MFCC + 100 i-vector
  int head_dim = 4;
  // One time stride per TDNN layer.
  std::vector<int> strides = {0, 1, 1, 1, 0, 3, 3, 3, 3, 3, 3, 3, 3};
};

// TDNN layers (default 13 with strides 0,1,1,1,0,3,...,3), a fully connected prefinal
// layer and a linear output layer, all hidden widths base_width*width_factor.
NetworkSpec paper_default_spec(const SpecOptions& opts = {});

// Offsets for a time stride: {0} for 0, else {-s, 0, s}.
std::vector<int> stride_offsets(int stride);

struct ReceptiveField {
  int left = 0;
  int right = 0;
  int total() const { return left + right + 1; }
};

ReceptiveField receptive_field(const NetworkSpec& spec);

struct LayerParams {
  Matrix weights;  // spliced_dim x output_dim
  std::vector<double> bias;

  bool operator==(const LayerParams&) const = default;
};

using Gradients = std::vector<LayerParams>;

struct Network {
  NetworkSpec spec;
  std::vector<LayerParams> params;
  // Fixed global affine applied to every input frame: (x - shift) * scale.
  std::vector<double> input_shift;
  std::vector<double> input_scale;

  // He-uniform weights for rectifier layers, Glorot-uniform for linear ones,
  // zero biases, identity input transform.
  static Network initialize(const NetworkSpec& spec, std::uint64_t seed);

  std::size_t num_parameters() const;
  void validate() const;
  bool operator==(const Network&) const = default;
};

Gradients zero_gradients(const Network& net);

enum class ForwardMode { dense, subsampled };

// Activations restricted to the computed frames of each layer.
struct ActivationTrace {
  std::size_t num_frames = 0;       // utterance length T
  std::vector<int> input_frames;    // sorted frame indices of `input`
  Matrix input;                     // normalized input rows
  std::vector<std::vector<int>> frames;  // per computed layer, sorted utterance frames
  std::vector<Matrix> outputs;           // per computed layer, post-activation rows

  // Number of (layer, frame) evaluations performed.
  std::size_t evaluations() const;
  // Row of `frame` in layer `layer`'s output, or -1.
  int row_of(std::size_t layer, int frame) const;
};

struct ForwardOptions {
  ForwardMode mode = ForwardMode::dense;
  // Output frames wanted from the last computed layer (subsampled mode
  // only). Empty means every frame.
  std::vector<int> requested_frames;
  // Compute layers [0, last_layer]; -1 means the whole network.
  int last_layer = -1;
};

ActivationTrace forward(const Network& net, const FeatureMatrix& x, const ForwardOptions& opts = {});

// Exact parameter gradients for a loss whose gradient w.r.t. the last
// computed layer's outputs (rows aligned with trace.frames.back()) is
// `output_grad`. Layers below `lowest_layer` receive no gradient.
Gradients backward(const Network& net, const ActivationTrace& trace, const Matrix& output_grad, int lowest_layer = 0);
// Accumulating form; `grads` must match the network shape.
void backward_accumulate(const Network& net, const ActivationTrace& trace, const Matrix& output_grad,
                         Gradients& grads, int lowest_layer = 0);

// Post-activation outputs of layer `tap` at every utterance frame; layers
// above the tap are not computed.
FeatureMatrix forward_bottleneck(const Network& net, const FeatureMatrix& x, int tap);

// Named bottleneck taps: "tdnnN" (1-based) or "prefinal".
int resolve_tap(const NetworkSpec& spec, std::string_view tap);

}  // namespace setl
