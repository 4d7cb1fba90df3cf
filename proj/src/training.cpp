#include "setl/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "setl/error.hpp"

namespace setl {

void TrainConfig::validate() const {
  const auto bad = [](const std::string& m) { fail(ErrorKind::invalid_argument, "train config: " + m); };
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) bad("learning_rate must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) bad("momentum must be in [0, 1)");
  if (epochs < 0) bad("epochs must be >= 0");
  if (batch_frames < 1) bad("batch_frames must be >= 1");
  if (!(lr_decay > 0.0)) bad("lr_decay must be positive");
  if (chunk_frames < 0) bad("chunk_frames must be >= 0");
  if (output_frame_stride < 1) bad("output_frame_stride must be >= 1");
}

LabeledFrames label_all_frames(FeatureMatrix features, int label) {
  const auto n = features.num_frames();
  return LabeledFrames{std::move(features), std::vector<int>(n, label)};
}

void write_train_report(const std::filesystem::path& path, const TrainReport& report) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io, "cannot write train report: " + path.string());
  out << "epoch,loss,frame_acc,seconds\n";
  out.precision(10);
  for (const auto& e : report.epochs) {
    out << e.epoch << ',' << e.loss << ',' << e.frame_accuracy << ',' << e.seconds << '\n';
  }
}

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) fail(ErrorKind::invalid_argument, "softmax: empty input");
  double best = -std::numeric_limits<double>::infinity();
  for (double v : logits) {
    if (!std::isfinite(v)) fail(ErrorKind::numeric, "softmax: non-finite logit");
    best = std::max(best, v);
  }
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp(logits[i] - best);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

double cross_entropy(std::span<const double> probs, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= probs.size()) {
    fail(ErrorKind::invalid_argument, "cross_entropy: label " + std::to_string(label) + " out of range");
  }
  return -std::log(std::max(probs[static_cast<std::size_t>(label)], 1e-12));
}

void sgd_step(std::span<double> params, std::span<const double> grads, std::span<double> velocity,
              double learning_rate, double momentum) {
  if (params.size() != grads.size() || params.size() != velocity.size()) {
    fail(ErrorKind::dimension_mismatch, "sgd_step: shape mismatch");
  }
  for (double g : grads) {
    if (!std::isfinite(g)) fail(ErrorKind::numeric, "sgd_step: non-finite gradient (training diverged)");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    velocity[i] = momentum * velocity[i] - learning_rate * grads[i];
    params[i] += velocity[i];
  }
}

void sgd_step(std::span<double> params, std::span<const double> grads, std::span<double> velocity,
              const TrainConfig& cfg) {
  sgd_step(params, grads, velocity, cfg.learning_rate, cfg.momentum);
}

namespace {

struct Piece {
  std::size_t utterance;
  std::vector<int> frames;
};

void check_data(const Network& net, std::span<const LabeledFrames> data) {
  if (data.empty()) fail(ErrorKind::invalid_argument, "train: empty dataset");
  const int classes = net.spec.head_dim();
  for (const auto& u : data) {
    if (u.features.dim() != static_cast<std::size_t>(net.spec.input_dim())) {
      fail(ErrorKind::dimension_mismatch, "train: utterance '" + u.features.utterance_id + "' has dim " +
                                              std::to_string(u.features.dim()));
    }
    if (u.labels.size() != u.features.num_frames() || u.labels.empty()) {
      fail(ErrorKind::invalid_argument, "train: utterance '" + u.features.utterance_id +
                                            "' needs exactly one label per frame");
    }
    for (int l : u.labels) {
      if (l < 0 || l >= classes) {
        fail(ErrorKind::invalid_argument, "train: label " + std::to_string(l) + " outside [0, " +
                                              std::to_string(classes) + ")");
      }
    }
  }
}

// Chunks of training frames, one list per chunk.
std::vector<Piece> make_chunks(std::span<const LabeledFrames> data, const TrainConfig& cfg) {
  std::vector<Piece> chunks;
  for (std::size_t u = 0; u < data.size(); ++u) {
    std::vector<int> frames;
    for (std::size_t t = 0; t < data[u].labels.size(); t += static_cast<std::size_t>(cfg.output_frame_stride)) {
      frames.push_back(static_cast<int>(t));
    }
    const std::size_t size = cfg.chunk_frames > 0 ? static_cast<std::size_t>(cfg.chunk_frames) : frames.size();
    for (std::size_t s = 0; s < frames.size(); s += size) {
      const std::size_t e = std::min(frames.size(), s + size);
      chunks.push_back({u, std::vector<int>(frames.begin() + static_cast<std::ptrdiff_t>(s),
                                            frames.begin() + static_cast<std::ptrdiff_t>(e))});
    }
  }
  return chunks;
}

// Consecutive batches of batch_frames frames; a chunk may straddle two batches.
std::vector<std::vector<Piece>> make_batches(const std::vector<Piece>& chunks, std::size_t batch_frames) {
  std::vector<std::vector<Piece>> batches(1);
  std::size_t filled = 0;
  for (const auto& c : chunks) {
    std::size_t pos = 0;
    while (pos < c.frames.size()) {
      if (filled == batch_frames) {
        batches.emplace_back();
        filled = 0;
      }
      const std::size_t take = std::min(batch_frames - filled, c.frames.size() - pos);
      batches.back().push_back({c.utterance, std::vector<int>(c.frames.begin() + static_cast<std::ptrdiff_t>(pos),
                                                              c.frames.begin() + static_cast<std::ptrdiff_t>(pos + take))});
      pos += take;
      filled += take;
    }
  }
  return batches;
}

std::vector<double> class_weights(std::span<const LabeledFrames> data, int classes, bool balance) {
  std::vector<double> w(static_cast<std::size_t>(classes), 1.0);
  if (!balance) return w;
  std::vector<double> counts(static_cast<std::size_t>(classes), 0.0);
  double total = 0.0;
  for (const auto& u : data) {
    for (int l : u.labels) counts[static_cast<std::size_t>(l)] += 1.0;
    total += static_cast<double>(u.labels.size());
  }
  double present = 0.0;
  for (double c : counts) present += c > 0.0 ? 1.0 : 0.0;
  for (std::size_t c = 0; c < w.size(); ++c) w[c] = counts[c] > 0.0 ? total / (present * counts[c]) : 0.0;
  return w;
}

template <typename F>
void for_each_param(Network& net, Gradients& grads, Gradients& velocity, const std::vector<bool>& trainable, F&& f) {
  for (std::size_t k = 0; k < net.params.size(); ++k) {
    if (!trainable.empty() && !trainable[k]) continue;
    f(std::span<double>(net.params[k].weights.values()), std::span<const double>(grads[k].weights.values()),
      std::span<double>(velocity[k].weights.values()));
    f(std::span<double>(net.params[k].bias), std::span<const double>(grads[k].bias),
      std::span<double>(velocity[k].bias));
  }
}

}  // namespace

TrainReport train(Network& net, std::span<const LabeledFrames> data, const TrainConfig& cfg, const TrainHooks& hooks) {
  cfg.validate();
  net.validate();
  check_data(net, data);
  if (!hooks.trainable.empty() && hooks.trainable.size() != net.params.size()) {
    fail(ErrorKind::dimension_mismatch, "train: trainable mask size mismatch");
  }
  int lowest = 0;
  if (!hooks.trainable.empty()) {
    const auto it = std::find(hooks.trainable.begin(), hooks.trainable.end(), true);
    if (it == hooks.trainable.end()) fail(ErrorKind::invalid_argument, "train: no trainable layers");
    lowest = static_cast<int>(it - hooks.trainable.begin());
  }

  const int classes = net.spec.head_dim();
  const auto weights = class_weights(data, classes, cfg.class_balance);
  std::vector<Piece> chunks = make_chunks(data, cfg);
  std::mt19937_64 rng(cfg.seed);
  Gradients velocity = zero_gradients(net);
  double lr = cfg.learning_rate;
  TrainReport report;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    if (cfg.shuffle) std::shuffle(chunks.begin(), chunks.end(), rng);
    const auto batches = make_batches(chunks, static_cast<std::size_t>(cfg.batch_frames));
    double loss_sum = 0.0, weight_sum = 0.0, correct = 0.0, frames_seen = 0.0;

    for (const auto& batch : batches) {
      double batch_weight = 0.0;
      for (const auto& piece : batch) {
        for (int t : piece.frames) batch_weight += weights[static_cast<std::size_t>(data[piece.utterance].labels[t])];
      }
      if (batch_weight <= 0.0) continue;
      Gradients grads = zero_gradients(net);
      for (const auto& piece : batch) {
        const auto& utt = data[piece.utterance];
        ForwardOptions fo;
        fo.mode = ForwardMode::subsampled;
        fo.requested_frames = piece.frames;
        const ActivationTrace trace = forward(net, utt.features, fo);
        const Matrix& logits = trace.outputs.back();
        const auto& frames = trace.frames.back();
        Matrix out_grad(logits.rows(), logits.cols());
        for (std::size_t r = 0; r < frames.size(); ++r) {
          const int label = utt.labels[static_cast<std::size_t>(frames[r])];
          const double w = weights[static_cast<std::size_t>(label)];
          const auto p = softmax(logits.row(r));
          const double loss = cross_entropy(p, label);
          if (!std::isfinite(loss)) fail(ErrorKind::numeric, "train: non-finite loss (training diverged)");
          loss_sum += w * loss;
          weight_sum += w;
          frames_seen += 1.0;
          if (std::max_element(p.begin(), p.end()) - p.begin() == label) correct += 1.0;
          auto g = out_grad.row(r);
          for (std::size_t c = 0; c < p.size(); ++c) {
            g[c] = w * (p[c] - (static_cast<int>(c) == label ? 1.0 : 0.0)) / batch_weight;
          }
        }
        backward_accumulate(net, trace, out_grad, grads, lowest);
      }
      for_each_param(net, grads, velocity, hooks.trainable,
                     [&](std::span<double> p, std::span<const double> g, std::span<double> v) {
                       sgd_step(p, g, v, lr, cfg.momentum);
                     });
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.loss = weight_sum > 0.0 ? loss_sum / weight_sum : 0.0;
    stats.frame_accuracy = frames_seen > 0.0 ? correct / frames_seen : 0.0;
    stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!std::isfinite(stats.loss)) fail(ErrorKind::numeric, "train: non-finite epoch loss");
    report.epochs.push_back(stats);
    lr *= cfg.lr_decay;
    if (hooks.on_epoch_end && hooks.on_epoch_end(stats, net)) break;
  }
  return report;
}

namespace {

double trace_loss(const ActivationTrace& trace, const LabeledFrames& sample) {
  const Matrix& logits = trace.outputs.back();
  double total = 0.0;
  for (std::size_t t = 0; t < logits.rows(); ++t) total += cross_entropy(softmax(logits.row(t)), sample.labels.at(t));
  return total / static_cast<double>(logits.rows());
}

// Dense forward in extended precision, used only for finite-difference
// probes: a loss difference of a parameter with a tiny gradient is lost to
// rounding in double. Also reports which rectifier units are active, since a
// difference is only valid when that pattern matches at both probe points.
struct PreciseEval {
  long double loss = 0.0L;
  std::vector<bool> active;
};

PreciseEval precise_eval(const Network& net, const LabeledFrames& sample) {
  const std::size_t n = sample.features.num_frames();
  const std::size_t d0 = sample.features.dim();
  std::vector<long double> h(n * d0);
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t d = 0; d < d0; ++d) {
      h[t * d0 + d] = (static_cast<long double>(sample.features.frames(t, d)) - net.input_shift[d]) *
                      static_cast<long double>(net.input_scale[d]);
    }
  }
  PreciseEval out;
  std::size_t in_dim = d0;
  for (std::size_t k = 0; k < net.spec.layers.size(); ++k) {
    const auto& layer = net.spec.layers[k];
    const auto& w = net.params[k].weights;
    const auto od = static_cast<std::size_t>(layer.output_dim);
    std::vector<long double> next(n * od);
    for (std::size_t t = 0; t < n; ++t) {
      for (std::size_t o = 0; o < od; ++o) {
        long double z = net.params[k].bias[o];
        for (std::size_t j = 0; j < layer.context_offsets.size(); ++j) {
          const auto src = static_cast<std::size_t>(
              std::clamp<long long>(static_cast<long long>(t) + layer.context_offsets[j], 0, static_cast<long long>(n) - 1));
          for (std::size_t d = 0; d < in_dim; ++d) {
            z += h[src * in_dim + d] * static_cast<long double>(w(j * in_dim + d, o));
          }
        }
        if (layer.activation == Activation::rectifier) {
          out.active.push_back(z > 0.0L);
          z = z > 0.0L ? z : 0.0L;
        }
        next[t * od + o] = z;
      }
    }
    h = std::move(next);
    in_dim = od;
  }
  long double total = 0.0L;
  for (std::size_t t = 0; t < n; ++t) {
    const long double* z = &h[t * in_dim];
    const long double m = *std::max_element(z, z + in_dim);
    long double sum = 0.0L;
    for (std::size_t c = 0; c < in_dim; ++c) sum += std::exp(z[c] - m);
    total += m + std::log(sum) - z[sample.labels.at(t)];
  }
  out.loss = total / static_cast<long double>(n);
  return out;
}

}  // namespace

double frame_loss(const Network& net, const LabeledFrames& sample) { return trace_loss(forward(net, sample.features), sample); }

Gradients frame_loss_gradient(const Network& net, const LabeledFrames& sample) {
  const ActivationTrace trace = forward(net, sample.features);
  const Matrix& logits = trace.outputs.back();
  Matrix out_grad(logits.rows(), logits.cols());
  const double scale = 1.0 / static_cast<double>(logits.rows());
  for (std::size_t t = 0; t < logits.rows(); ++t) {
    const auto p = softmax(logits.row(t));
    const int label = sample.labels.at(t);
    for (std::size_t c = 0; c < p.size(); ++c) {
      out_grad(t, c) = scale * (p[c] - (static_cast<int>(c) == label ? 1.0 : 0.0));
    }
  }
  return backward(net, trace, out_grad);
}

GradCheckResult gradient_check(const Network& net, const LabeledFrames& sample, double step) {
  if (!(step > 0.0) || !std::isfinite(step)) fail(ErrorKind::invalid_argument, "gradient_check: step must be positive");
  const Gradients analytic = frame_loss_gradient(net, sample);
  const std::vector<bool> base = precise_eval(net, sample).active;
  Network probe = net;
  GradCheckResult result;
  const auto check = [&](double& param, double grad, std::size_t layer) {
    const double saved = param;
    double h = step;
    for (int attempt = 0; attempt <= GradCheckResult::kMaxStepReductions; ++attempt, h *= 0.5) {
      // Central differences at h and h/2 combined by Richardson extrapolation.
      long double diff[2];
      bool smooth = true;
      for (int q = 0; q < 2 && smooth; ++q) {
        const double hq = q == 0 ? h : 0.5 * h;
        param = saved + hq;
        const PreciseEval plus = precise_eval(probe, sample);
        param = saved - hq;
        const PreciseEval minus = precise_eval(probe, sample);
        smooth = plus.active == base && minus.active == base;
        // The probe points actually representable in double.
        const long double span = static_cast<long double>(saved + hq) - static_cast<long double>(saved - hq);
        diff[q] = (plus.loss - minus.loss) / span;
      }
      param = saved;
      if (!smooth) continue;
      const double numeric = static_cast<double>((4.0L * diff[1] - diff[0]) / 3.0L);
      const double denom = std::max({std::abs(grad), std::abs(numeric), 1e-8});
      const double err = std::abs(grad - numeric) / denom;
      if (err > result.max_relative_error) {
        result.max_relative_error = err;
        result.worst_layer = layer;
      }
      if (attempt > 0) ++result.reduced_steps;
      ++result.parameters_checked;
      return;
    }
    ++result.kinks_skipped;
  };
  for (std::size_t k = 0; k < probe.params.size(); ++k) {
    auto& w = probe.params[k].weights.values();
    for (std::size_t i = 0; i < w.size(); ++i) check(w[i], analytic[k].weights.values()[i], k);
    auto& b = probe.params[k].bias;
    for (std::size_t i = 0; i < b.size(); ++i) check(b[i], analytic[k].bias[i], k);
  }
  return result;
}

}  // namespace setl
