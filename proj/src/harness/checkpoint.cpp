#include "berth/harness/checkpoint.hpp"

#include <array>
#include <cstring>
#include <fstream>

namespace berth::harness {
namespace {

constexpr std::array<char, 8> kMagic{'B', 'E', 'R', 'T', 'H', 'C', 'K', 'P'};

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  template <typename T>
  void pod(const T& v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void matrix(const nn::Matrix& m) {
    pod<std::int64_t>(m.rows());
    pod<std::int64_t>(m.cols());
    out_.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  template <typename T>
  T pod() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof(T));
    check();
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint64_t>();
    if (n > (std::uint64_t{1} << 32)) {
      throw CheckpointError("checkpoint: implausible string length");
    }
    std::string s(n, '\0');
    in_.read(s.data(), static_cast<std::streamsize>(n));
    check();
    return s;
  }
  nn::Matrix matrix() {
    const auto rows = pod<std::int64_t>();
    const auto cols = pod<std::int64_t>();
    if (rows < 0 || cols < 0 || rows * cols > (std::int64_t{1} << 28)) {
      throw CheckpointError("checkpoint: implausible array shape");
    }
    nn::Matrix m(rows, cols);
    in_.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
    check();
    return m;
  }

 private:
  void check() {
    if (!in_) {
      throw CheckpointError("checkpoint: file is truncated");
    }
  }
  std::istream& in_;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const RunConfig& config, const agent::ActorCritic& agent,
                     const ppo::TrainerState& state) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw CheckpointError("cannot write checkpoint '" + tmp.string() + "'");
    }
    Writer w(out);
    out.write(kMagic.data(), kMagic.size());
    w.pod(kCheckpointVersion);
    w.str(config.to_json().dump());

    const auto& store = agent.params();
    w.pod<std::uint64_t>(store.size());
    for (const auto& p : store) {
      w.str(p.name);
      w.matrix(p.value);
      w.matrix(p.m);
      w.matrix(p.v);
    }
    w.pod<std::int64_t>(store.step);

    const auto& norm = state.normalizer;
    w.pod<std::uint8_t>(norm.enabled() ? 1 : 0);
    w.pod(norm.count());
    w.matrix(norm.mean());
    w.matrix(norm.m2());

    w.str(state.shuffle_rng.serialize());
    w.pod<std::uint64_t>(state.reset_rngs.size());
    for (std::size_t i = 0; i < state.reset_rngs.size(); ++i) {
      w.str(state.reset_rngs[i].serialize());
      w.str(state.action_rngs[i].serialize());
    }
    w.pod(state.global_step);
    w.pod(state.episodes_done);
    w.pod<std::int64_t>(state.updates);
    if (!out) {
      throw CheckpointError("failed while writing checkpoint '" + tmp.string() + "'");
    }
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
  }
  Reader r(in);
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) {
    throw CheckpointError("'" + path.string() + "' is not a checkpoint file");
  }
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }

  Checkpoint ck;
  try {
    ck.config = RunConfig::from_json(json::parse(r.str()));
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("checkpoint config is invalid: ") + e.what());
  }
  ck.agent = std::make_unique<agent::ActorCritic>(ck.config.agent, ck.config.action_bounds(), ck.config.seed);

  auto& store = ck.agent->params();
  const auto count = r.pod<std::uint64_t>();
  if (count != store.size()) {
    throw CheckpointError("checkpoint parameter count does not match its config");
  }
  for (auto& p : store) {
    const std::string name = r.str();
    if (name != p.name) {
      throw CheckpointError("checkpoint parameter '" + name + "' found where '" + p.name + "' was expected");
    }
    nn::Matrix value = r.matrix();
    nn::Matrix m = r.matrix();
    nn::Matrix v = r.matrix();
    if (value.rows() != p.value.rows() || value.cols() != p.value.cols() || m.rows() != value.rows() ||
        m.cols() != value.cols() || v.rows() != value.rows() || v.cols() != value.cols()) {
      throw CheckpointError("checkpoint parameter '" + name + "' has the wrong shape");
    }
    p.value = std::move(value);
    p.m = std::move(m);
    p.v = std::move(v);
  }
  store.step = r.pod<std::int64_t>();

  const bool enabled = r.pod<std::uint8_t>() != 0;
  const double n = r.pod<double>();
  nn::Matrix mean = r.matrix();
  nn::Matrix m2 = r.matrix();
  const int dim = agent::feature_count(ck.config.agent);
  if (mean.size() != dim || m2.size() != dim) {
    throw CheckpointError("checkpoint normalizer has the wrong dimension");
  }
  ck.state.normalizer = agent::ObservationNormalizer(dim, ck.config.agent.obs_clip, enabled);
  ck.state.normalizer.restore(n, mean.reshaped(), m2.reshaped());

  ck.state.shuffle_rng.deserialize(r.str());
  const auto workers = r.pod<std::uint64_t>();
  if (workers > 4096) {
    throw CheckpointError("checkpoint worker count is implausible");
  }
  for (std::uint64_t i = 0; i < workers; ++i) {
    ck.state.reset_rngs.emplace_back().deserialize(r.str());
    ck.state.action_rngs.emplace_back().deserialize(r.str());
  }
  ck.state.global_step = r.pod<std::int64_t>();
  ck.state.episodes_done = r.pod<std::int64_t>();
  ck.state.updates = static_cast<int>(r.pod<std::int64_t>());
  return ck;
}

}  // namespace berth::harness
