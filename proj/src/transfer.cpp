#include "setl/transfer.hpp"

#include <cmath>

#include "setl/error.hpp"

namespace setl {

void fit_input_normalization(Network& net, std::span<const LabeledFrames> corpus) {
  const auto dim = static_cast<std::size_t>(net.spec.input_dim());
  std::vector<double> mean(dim, 0.0), var(dim, 0.0);
  double count = 0.0;
  for (const auto& u : corpus) {
    for (std::size_t t = 0; t < u.features.num_frames(); ++t) {
      const auto row = u.features.frames.row(t);
      for (std::size_t d = 0; d < dim; ++d) mean[d] += row[d];
    }
    count += static_cast<double>(u.features.num_frames());
  }
  if (count == 0.0) fail(ErrorKind::invalid_argument, "cannot fit input normalization on no frames");
  for (double& m : mean) m /= count;
  for (const auto& u : corpus) {
    for (std::size_t t = 0; t < u.features.num_frames(); ++t) {
      const auto row = u.features.frames.row(t);
      for (std::size_t d = 0; d < dim; ++d) var[d] += (row[d] - mean[d]) * (row[d] - mean[d]);
    }
  }
  net.input_shift = mean;
  net.input_scale.resize(dim);
  for (std::size_t d = 0; d < dim; ++d) {
    const double sd = std::sqrt(var[d] / count);
    net.input_scale[d] = sd > 1e-8 ? 1.0 / sd : 1.0;
  }
}

Checkpoint pretrain(std::span<const LabeledFrames> corpus, const NetworkSpec& spec, const TrainConfig& cfg,
                    const FeatureFingerprint& fingerprint, TrainReport* report, const TrainHooks& hooks) {
  if (corpus.empty()) fail(ErrorKind::invalid_argument, "pretrain: empty corpus");
  if (spec.input_dim() != fingerprint.input_dim()) {
    fail(ErrorKind::fingerprint_mismatch, "pretrain: network input dim " + std::to_string(spec.input_dim()) +
                                              " does not match feature dim " + std::to_string(fingerprint.input_dim()));
  }
  for (const auto& u : corpus) {
    if (u.features.dim() != static_cast<std::size_t>(fingerprint.input_dim())) {
      fail(ErrorKind::fingerprint_mismatch, "pretrain: utterance '" + u.features.utterance_id +
                                                "' does not match the feature fingerprint");
    }
  }
  Checkpoint ck;
  ck.net = Network::initialize(spec, cfg.seed);
  fit_input_normalization(ck.net, corpus);
  ck.fingerprint = fingerprint;
  TrainReport r;
  if (cfg.epochs > 0) r = train(ck.net, corpus, cfg, hooks);
  ck.provenance = {"proxy-asr", static_cast<int>(r.epochs.size()), cfg.seed};
  if (report) *report = std::move(r);
  return ck;
}

Network attach_head(const Checkpoint& ck, std::string_view tap, int num_classes, const HeadOptions& opts) {
  if (num_classes < 2) fail(ErrorKind::invalid_argument, "attach_head: need at least 2 classes");
  if (opts.hidden_dim < 1) fail(ErrorKind::invalid_argument, "attach_head: hidden dim must be positive");
  const int tap_index = resolve_tap(ck.net.spec, tap);
  const int tap_dim = ck.net.spec.layers[tap_index].output_dim;

  NetworkSpec head_spec;
  head_spec.layers = {{"head_hidden", LayerRole::head_hidden, tap_dim, opts.hidden_dim, {0}, Activation::rectifier},
                      {"head_output", LayerRole::output, opts.hidden_dim, num_classes, {0}, Activation::identity}};
  const Network head = Network::initialize(head_spec, opts.seed);

  Network net;
  net.input_shift = ck.net.input_shift;
  net.input_scale = ck.net.input_scale;
  for (int k = 0; k <= tap_index; ++k) {
    net.spec.layers.push_back(ck.net.spec.layers[k]);
    net.params.push_back(ck.net.params[k]);
  }
  for (std::size_t k = 0; k < head.params.size(); ++k) {
    net.spec.layers.push_back(head.spec.layers[k]);
    net.params.push_back(head.params[k]);
  }
  net.validate();
  return net;
}

namespace {
bool is_head(LayerRole r) { return r == LayerRole::head_hidden || r == LayerRole::output; }
}  // namespace

FreezePolicy FreezePolicy::freeze_pretrained(const Network& net) {
  FreezePolicy p;
  for (std::size_t k = 0; k < net.spec.layers.size(); ++k) {
    if (!is_head(net.spec.layers[k].role)) p.frozen_layers.insert(static_cast<int>(k));
  }
  return p;
}

std::vector<bool> FreezePolicy::trainable_mask(const Network& net) const {
  std::vector<bool> mask(net.spec.layers.size(), true);
  for (int k : frozen_layers) {
    if (k < 0 || k >= static_cast<int>(mask.size())) fail(ErrorKind::invalid_argument, "freeze policy: bad layer index");
    if (is_head(net.spec.layers[k].role)) fail(ErrorKind::invalid_argument, "freeze policy: head layers cannot be frozen");
    mask[k] = false;
  }
  return mask;
}

TrainReport finetune(Network& net, std::span<const LabeledFrames> data, const FreezePolicy& policy,
                     const TrainConfig& cfg, const TrainHooks& hooks) {
  if (data.empty()) fail(ErrorKind::invalid_argument, "finetune: empty data");
  TrainHooks h = hooks;
  h.trainable = policy.trainable_mask(net);
  return train(net, data, cfg, h);
}

}  // namespace setl
