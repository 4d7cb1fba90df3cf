#include "setl/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "setl/binary_io.hpp"
#include "setl/error.hpp"

namespace setl {

void check_fingerprint(const FeatureFingerprint& expected, const FeatureFingerprint& actual) {
  const auto mismatch = [](const std::string& field, const std::string& want, const std::string& got) {
    fail(ErrorKind::fingerprint_mismatch,
         "feature fingerprint mismatch on " + field + ": expected " + want + ", got " + got);
  };
  const auto& a = expected.mfcc;
  const auto& b = actual.mfcc;
  if (a.num_ceps != b.num_ceps) mismatch("MFCC dim", std::to_string(a.num_ceps), std::to_string(b.num_ceps));
  if (expected.ivector_dim != actual.ivector_dim) {
    mismatch("i-vector dim", std::to_string(expected.ivector_dim), std::to_string(actual.ivector_dim));
  }
  if (expected.sample_rate_hz != actual.sample_rate_hz) {
    mismatch("sample rate", std::to_string(expected.sample_rate_hz), std::to_string(actual.sample_rate_hz));
  }
  if (!(a == b)) mismatch("MFCC parameters", "identical configuration", "a different configuration");
}

namespace {

constexpr std::string_view kMagic = "TDNNCK2";

void write_block(std::ostream& out, const std::ostringstream& block) {
  const std::string bytes = block.str();
  binio::write_u32(out, static_cast<std::uint32_t>(bytes.size()));
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::istringstream read_block(std::istream& in, const char* what) {
  const auto len = binio::read_u32(in, what);
  if (len > (1u << 26)) fail(ErrorKind::format, std::string("implausible block length for ") + what);
  std::string bytes(len, '\0');
  in.read(bytes.data(), len);
  if (in.gcount() != static_cast<std::streamsize>(len)) {
    fail(ErrorKind::format, std::string("truncated checkpoint while reading ") + what);
  }
  return std::istringstream(std::move(bytes));
}

void expect_consumed(std::istringstream& block, const char* what) {
  if (block.peek() != std::char_traits<char>::eof()) {
    fail(ErrorKind::format, std::string("trailing bytes in checkpoint block ") + what);
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  ck.net.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::io, "cannot write checkpoint: " + path.string());
  binio::write_magic(out, kMagic);
  binio::write_u32(out, kCheckpointVersion);

  std::ostringstream fp;
  const auto& m = ck.fingerprint.mfcc;
  binio::write_u32(fp, static_cast<std::uint32_t>(ck.fingerprint.sample_rate_hz));
  binio::write_f64(fp, m.frame_length_ms);
  binio::write_f64(fp, m.frame_shift_ms);
  binio::write_u32(fp, static_cast<std::uint32_t>(m.num_mel_filters));
  binio::write_u32(fp, static_cast<std::uint32_t>(m.num_ceps));
  binio::write_f64(fp, m.pre_emphasis);
  binio::write_u32(fp, static_cast<std::uint32_t>(m.fft_size));
  binio::write_f64(fp, m.low_freq_hz);
  binio::write_f64(fp, m.high_freq_hz);
  binio::write_u32(fp, m.use_energy_as_c0 ? 1u : 0u);
  binio::write_f64(fp, m.log_floor);
  binio::write_u32(fp, static_cast<std::uint32_t>(ck.fingerprint.ivector_dim));
  write_block(out, fp);

  std::ostringstream prov;
  binio::write_string(prov, ck.provenance.task);
  binio::write_u32(prov, static_cast<std::uint32_t>(ck.provenance.epochs));
  binio::write_u64(prov, ck.provenance.seed);
  write_block(out, prov);

  std::ostringstream spec;
  binio::write_u32(spec, static_cast<std::uint32_t>(ck.net.spec.layers.size()));
  for (const auto& l : ck.net.spec.layers) {
    binio::write_string(spec, l.name);
    binio::write_u32(spec, static_cast<std::uint32_t>(l.role));
    binio::write_u32(spec, static_cast<std::uint32_t>(l.input_dim));
    binio::write_u32(spec, static_cast<std::uint32_t>(l.output_dim));
    binio::write_u32(spec, static_cast<std::uint32_t>(l.activation));
    binio::write_u32(spec, static_cast<std::uint32_t>(l.context_offsets.size()));
    for (int o : l.context_offsets) binio::write_i32(spec, o);
  }
  write_block(out, spec);

  std::ostringstream xform;
  binio::write_u32(xform, static_cast<std::uint32_t>(ck.net.input_shift.size()));
  binio::write_f64s(xform, ck.net.input_shift);
  binio::write_f64s(xform, ck.net.input_scale);
  write_block(out, xform);

  binio::write_u64(out, ck.net.num_parameters());
  for (const auto& p : ck.net.params) {
    binio::write_f64s(out, p.weights.values());
    binio::write_f64s(out, p.bias);
  }
  if (!out) fail(ErrorKind::io, "failed writing checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open checkpoint: " + path.string());
  binio::expect_magic(in, kMagic);
  const auto version = binio::read_u32(in, "version");
  if (version != kCheckpointVersion) {
    fail(ErrorKind::format, "unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ck;

  auto fp = read_block(in, "fingerprint");
  auto& m = ck.fingerprint.mfcc;
  ck.fingerprint.sample_rate_hz = static_cast<int>(binio::read_u32(fp, "sample rate"));
  m.frame_length_ms = binio::read_f64(fp, "frame length");
  m.frame_shift_ms = binio::read_f64(fp, "frame shift");
  m.num_mel_filters = static_cast<int>(binio::read_u32(fp, "mel filters"));
  m.num_ceps = static_cast<int>(binio::read_u32(fp, "ceps"));
  m.pre_emphasis = binio::read_f64(fp, "pre-emphasis");
  m.fft_size = static_cast<int>(binio::read_u32(fp, "fft size"));
  m.low_freq_hz = binio::read_f64(fp, "low freq");
  m.high_freq_hz = binio::read_f64(fp, "high freq");
  m.use_energy_as_c0 = binio::read_u32(fp, "energy flag") != 0;
  m.log_floor = binio::read_f64(fp, "log floor");
  ck.fingerprint.ivector_dim = static_cast<int>(binio::read_u32(fp, "i-vector dim"));
  expect_consumed(fp, "fingerprint");

  auto prov = read_block(in, "provenance");
  ck.provenance.task = binio::read_string(prov, "task");
  ck.provenance.epochs = static_cast<int>(binio::read_u32(prov, "epochs"));
  ck.provenance.seed = binio::read_u64(prov, "seed");
  expect_consumed(prov, "provenance");

  auto spec = read_block(in, "spec");
  const auto num_layers = binio::read_u32(spec, "layer count");
  if (num_layers == 0 || num_layers > 4096) fail(ErrorKind::format, "implausible layer count");
  for (std::uint32_t k = 0; k < num_layers; ++k) {
    LayerSpec l;
    l.name = binio::read_string(spec, "layer name", 256);
    const auto role = binio::read_u32(spec, "layer role");
    if (role > static_cast<std::uint32_t>(LayerRole::output)) fail(ErrorKind::format, "bad layer role");
    l.role = static_cast<LayerRole>(role);
    l.input_dim = static_cast<int>(binio::read_u32(spec, "input dim"));
    l.output_dim = static_cast<int>(binio::read_u32(spec, "output dim"));
    const auto act = binio::read_u32(spec, "activation");
    if (act > static_cast<std::uint32_t>(Activation::identity)) fail(ErrorKind::format, "bad activation");
    l.activation = static_cast<Activation>(act);
    const auto n_off = binio::read_u32(spec, "offset count");
    if (n_off == 0 || n_off > 1024) fail(ErrorKind::format, "implausible offset count");
    l.context_offsets.resize(n_off);
    for (auto& o : l.context_offsets) o = binio::read_i32(spec, "offset");
    ck.net.spec.layers.push_back(std::move(l));
  }
  expect_consumed(spec, "spec");
  try {
    ck.net.spec.validate();
  } catch (const Error& e) {
    fail(ErrorKind::format, std::string("corrupt checkpoint spec: ") + e.what());
  }

  auto xform = read_block(in, "input transform");
  const auto dim = binio::read_u32(xform, "input dim");
  if (dim != static_cast<std::uint32_t>(ck.net.spec.input_dim())) fail(ErrorKind::format, "input transform dim mismatch");
  ck.net.input_shift.resize(dim);
  ck.net.input_scale.resize(dim);
  binio::read_f64s(xform, ck.net.input_shift, "input shift");
  binio::read_f64s(xform, ck.net.input_scale, "input scale");
  expect_consumed(xform, "input transform");

  const auto count = binio::read_u64(in, "parameter count");
  std::uint64_t expected = 0;
  for (const auto& l : ck.net.spec.layers) {
    expected += static_cast<std::uint64_t>(l.spliced_dim()) * l.output_dim + l.output_dim;
  }
  if (count != expected) fail(ErrorKind::format, "parameter count does not match the spec");
  for (const auto& l : ck.net.spec.layers) {
    LayerParams p{Matrix(l.spliced_dim(), l.output_dim), std::vector<double>(l.output_dim)};
    binio::read_f64s(in, p.weights.values(), "weights");
    binio::read_f64s(in, p.bias, "bias");
    ck.net.params.push_back(std::move(p));
  }
  if (in.peek() != std::char_traits<char>::eof()) fail(ErrorKind::format, "trailing bytes after checkpoint");
  return ck;
}

}  // namespace setl
