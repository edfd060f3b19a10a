#include "checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "error.hpp"

namespace curlcl {

namespace {

constexpr char kMagic[8] = {'C', 'U', 'R', 'L', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kFlagSnapshot = 1u << 0;
constexpr std::uint32_t kFlagAdam = 1u << 1;
// Guards against absurd sizes in corrupted headers.
constexpr std::uint64_t kMaxDim = 1u << 24;

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void raw(const char* p, std::size_t n) { out_.insert(out_.end(), p, p + n); }
  void matrix(const Matrix& m) {
    for (double v : m.values()) f64(v);
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& in) : in_(in) {}

  std::uint32_t u32(const char* field) {
    need(4, field);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64(const char* field) {
    need(8, field);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t dim(const char* field) {
    const std::uint64_t v = u64(field);
    if (v > kMaxDim) throw Error(ErrorCode::parse, std::string("checkpoint: implausible ") + field);
    return v;
  }
  double f64(const char* field) { return std::bit_cast<double>(u64(field)); }
  void matrix(Matrix& m, const char* field) {
    need(8 * m.size(), field);
    for (double& v : m.values()) v = f64(field);
  }
  bool magic() {
    need(sizeof(kMagic), "magic");
    const bool ok = std::memcmp(in_.data(), kMagic, sizeof(kMagic)) == 0;
    pos_ += sizeof(kMagic);
    return ok;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n, const char* field) {
    if (in_.size() - pos_ < n) {
      throw Error(ErrorCode::parse, std::string("checkpoint: truncated at ") + field);
    }
  }
  const std::vector<std::uint8_t>& in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
  ckpt.params.validate();
  const Architecture& arch = ckpt.params.architecture;
  Writer w;
  w.raw(kMagic, sizeof(kMagic));
  w.u32(kCheckpointVersion);
  w.u32((ckpt.snapshot ? kFlagSnapshot : 0u) | (ckpt.adam ? kFlagAdam : 0u));
  w.u32(Rng::kAlgorithmId);
  w.u64(ckpt.step);
  w.u64(arch.input_dim);
  w.u64(arch.latent_dim);
  w.u64(arch.k_init);
  w.u64(arch.k_max);
  w.u64(ckpt.params.num_components());
  w.u64(arch.encoder.size());
  for (auto s : arch.encoder) w.u64(s);
  w.u64(arch.decoder.size());
  for (auto s : arch.decoder) w.u64(s);
  const AdamState adam = ckpt.adam.value_or(AdamState{});
  w.f64(adam.config.learning_rate);
  w.f64(adam.config.beta1);
  w.f64(adam.config.beta2);
  w.f64(adam.config.epsilon);
  w.u64(adam.step);
  const auto buffers = ckpt.params.buffers();
  for (const Matrix* b : buffers) w.matrix(*b);
  if (ckpt.adam) {
    // Moments are materialized lazily on the first step; write zeros before that.
    for (const auto* moments : {&adam.first_moment, &adam.second_moment}) {
      for (std::size_t i = 0; i < buffers.size(); ++i) {
        if (moments->empty()) {
          w.matrix(Matrix(buffers[i]->rows(), buffers[i]->cols()));
        } else {
          if (moments->size() != buffers.size() || !(*moments)[i].same_shape(*buffers[i])) {
            throw Error(ErrorCode::state, "checkpoint: Adam state does not match parameters");
          }
          w.matrix((*moments)[i]);
        }
      }
    }
  }
  w.u64(ckpt.usage.accumulated.size());
  for (double v : ckpt.usage.accumulated) w.f64(v);
  w.u64(ckpt.usage.total_batches);
  return w.take();
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (!r.magic()) throw Error(ErrorCode::parse, "checkpoint: bad magic");
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::parse, "checkpoint: unsupported version " + std::to_string(version));
  }
  const std::uint32_t flags = r.u32("flags");
  const std::uint32_t rng_id = r.u32("rng id");
  if (rng_id != Rng::kAlgorithmId) {
    throw Error(ErrorCode::parse, "checkpoint: written with RNG algorithm " +
                                      std::to_string(rng_id) + ", this build uses " +
                                      std::to_string(Rng::kAlgorithmId));
  }
  Checkpoint ckpt;
  ckpt.snapshot = (flags & kFlagSnapshot) != 0;
  ckpt.step = r.u64("step");
  Architecture arch;
  arch.input_dim = r.dim("input_dim");
  arch.latent_dim = r.dim("latent_dim");
  arch.k_init = r.dim("k_init");
  arch.k_max = r.dim("k_max");
  const std::uint64_t k = r.dim("component count");
  arch.encoder.resize(r.dim("encoder depth"));
  for (auto& s : arch.encoder) s = r.dim("encoder size");
  arch.decoder.resize(r.dim("decoder depth"));
  for (auto& s : arch.decoder) s = r.dim("decoder size");
  arch.validate();
  if (k == 0 || k > arch.k_max) {
    throw Error(ErrorCode::parse, "checkpoint: component count " + std::to_string(k) +
                                      " outside [1, " + std::to_string(arch.k_max) + "]");
  }

  AdamState adam;
  adam.config.learning_rate = r.f64("learning rate");
  adam.config.beta1 = r.f64("beta1");
  adam.config.beta2 = r.f64("beta2");
  adam.config.epsilon = r.f64("epsilon");
  adam.step = r.u64("adam step");

  // Build the shapes from the header, then fill.
  Architecture shape_arch = arch;
  shape_arch.k_init = 1;
  Rng scratch(0);
  ModelParams params = ModelParams::zeros_like(ModelParams::initialize(shape_arch, scratch));
  while (params.num_components() < k) params.add_component_copy(0);
  params.architecture = arch;
  auto buffers = params.buffers();
  for (Matrix* b : buffers) r.matrix(*b, "parameters");
  if (flags & kFlagAdam) {
    for (auto* moments : {&adam.first_moment, &adam.second_moment}) {
      for (const Matrix* b : buffers) {
        Matrix m(b->rows(), b->cols());
        r.matrix(m, "adam moments");
        moments->push_back(std::move(m));
      }
    }
    ckpt.adam = std::move(adam);
  }
  ckpt.usage.accumulated.resize(r.dim("usage count"));
  for (double& v : ckpt.usage.accumulated) v = r.f64("usage counts");
  ckpt.usage.total_batches = r.u64("usage total");
  if (!r.done()) throw Error(ErrorCode::parse, "checkpoint: trailing bytes");
  ckpt.params = std::move(params);
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::io, "write failed for '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace curlcl
