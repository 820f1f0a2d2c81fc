#include "berth/harness/io.hpp"

#include <charconv>
#include <sstream>

namespace berth::harness {
namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) {
    out.push_back(field);
  }
  if (!line.empty() && line.back() == ',') {
    out.emplace_back();
  }
  return out;
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') {
    s.pop_back();
  }
  return s;
}

std::ofstream open_for_write(const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw std::runtime_error("cannot write '" + path.string() + "'");
  }
  return out;
}

}  // namespace

std::string format_double(double x) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

NumericTable read_numeric_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw SchemaError("cannot open '" + path.string() + "'");
  }
  NumericTable t;
  std::string line;
  if (!std::getline(in, line)) {
    throw SchemaError("'" + path.string() + "' is empty");
  }
  t.header = split(strip_cr(line));
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) {
      continue;
    }
    const auto fields = split(line);
    if (fields.size() != t.header.size()) {
      throw SchemaError("line " + std::to_string(line_no) + ": expected " + std::to_string(t.header.size()) +
                        " fields, found " + std::to_string(fields.size()));
    }
    std::vector<double> row(fields.size());
    for (std::size_t k = 0; k < fields.size(); ++k) {
      const auto& f = fields[k];
      const auto res = std::from_chars(f.data(), f.data() + f.size(), row[k]);
      if (res.ec != std::errc() || res.ptr != f.data() + f.size()) {
        throw SchemaError("line " + std::to_string(line_no) + ", column '" + t.header[k] + "': '" + f +
                          "' is not a number");
      }
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

void write_trajectory_csv(const std::filesystem::path& path, const std::vector<ppo::TrajectoryRow>& rows) {
  auto out = open_for_write(path);
  out << kTrajectoryHeader << '\n';
  for (const auto& r : rows) {
    for (double v : {r.t, r.x, r.y, r.psi_deg, r.u, r.v, r.r, r.delta_deg, r.n, r.reward, r.d}) {
      out << format_double(v) << ',';
    }
    out << format_double(r.psi_prime_deg) << '\n';
  }
}

std::vector<ppo::TrajectoryRow> read_trajectory_csv(const std::filesystem::path& path) {
  const auto table = read_numeric_csv(path);
  const auto expected = split(kTrajectoryHeader);
  for (std::size_t k = 0; k < expected.size(); ++k) {
    if (k >= table.header.size()) {
      throw SchemaError("trajectory CSV is missing column '" + expected[k] + "'");
    }
    if (table.header[k] != expected[k]) {
      throw SchemaError("trajectory CSV column " + std::to_string(k + 1) + " is '" + table.header[k] +
                        "', expected '" + expected[k] + "'");
    }
  }
  if (table.header.size() != expected.size()) {
    throw SchemaError("trajectory CSV has unexpected extra column '" + table.header[expected.size()] + "'");
  }
  std::vector<ppo::TrajectoryRow> rows;
  rows.reserve(table.rows.size());
  for (const auto& v : table.rows) {
    rows.push_back({v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8], v[9], v[10], v[11]});
  }
  return rows;
}

RewardLog::RewardLog(const std::filesystem::path& path) : out_(open_for_write(path)) {
  out_ << kRewardHeader << '\n';
}

void RewardLog::append(const ppo::StepRecord& rec) {
  ema_ = started_ ? kSmoothing * ema_ + (1.0 - kSmoothing) * rec.reward : rec.reward;
  started_ = true;
  out_ << rec.global_step << ',' << rec.episode << ',' << format_double(rec.reward) << ','
       << format_double(rec.episode_return) << ',' << format_double(ema_) << '\n';
}

StatsLog::StatsLog(const std::filesystem::path& path) : out_(open_for_write(path)) { out_ << kStatsHeader << '\n'; }

void StatsLog::append(const ppo::TrainStats& s) {
  out_ << s.update_idx << ',' << format_double(s.policy_loss) << ',' << format_double(s.value_loss) << ','
       << format_double(s.entropy) << ',' << format_double(s.kl) << ',' << format_double(s.clip_frac) << '\n';
}

std::vector<RewardRow> read_reward_csv(const std::filesystem::path& path) {
  const auto table = read_numeric_csv(path);
  if (table.header != split(kRewardHeader)) {
    throw SchemaError("'" + path.string() + "' does not have the reward CSV header");
  }
  std::vector<RewardRow> rows;
  rows.reserve(table.rows.size());
  for (const auto& v : table.rows) {
    rows.push_back({static_cast<std::int64_t>(v[0]), static_cast<std::int64_t>(v[1]), v[2], v[3], v[4]});
  }
  return rows;
}

}  // namespace berth::harness
