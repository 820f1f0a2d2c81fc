#include "berth/harness/plots.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <sstream>

namespace berth::harness {
namespace {

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", x);
  return buf;
}

std::string tick_label(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", std::abs(x) < 1e-12 ? 0.0 : x);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

// Linear map from a data interval onto a pixel interval.
struct Scale {
  double d0, d1, p0, p1;
  double operator()(double x) const { return p0 + (x - d0) * (p1 - p0) / (d1 - d0); }
};

double nice_step(double span, int target) {
  const double raw = span / std::max(target, 1);
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    if (m * mag >= raw) {
      return m * mag;
    }
  }
  return 10.0 * mag;
}

std::vector<double> ticks(double lo, double hi, int target) {
  std::vector<double> out;
  const double step = nice_step(hi - lo, target);
  for (double t = std::ceil(lo / step - 1e-9) * step; t <= hi + 1e-9 * step; t += step) {
    out.push_back(t);
  }
  return out;
}

std::pair<double, double> padded_range(const std::vector<double>& v) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (double x : v) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  if (v.empty()) {
    return {-1.0, 1.0};
  }
  if (hi - lo < 1e-12) {
    // Constant channel: centre the flat line in the panel.
    const double pad = std::max(1.0, std::abs(lo) * 0.1);
    return {lo - pad, hi + pad};
  }
  const double pad = 0.05 * (hi - lo);
  return {lo - pad, hi + pad};
}

void axis_frame(std::ostringstream& os, const Scale& sx, const Scale& sy, const std::string& xlabel,
                const std::string& ylabel) {
  const double left = sx.p0, right = sx.p1, bottom = sy.p0, top = sy.p1;
  os << "<rect x=\"" << num(left) << "\" y=\"" << num(top) << "\" width=\"" << num(right - left) << "\" height=\""
     << num(bottom - top) << "\" fill=\"none\" stroke=\"#333\"/>\n";
  for (double t : ticks(sx.d0, sx.d1, 6)) {
    const double x = sx(t);
    os << "<line x1=\"" << num(x) << "\" y1=\"" << num(bottom) << "\" x2=\"" << num(x) << "\" y2=\""
       << num(bottom + 4) << "\" stroke=\"#333\"/>";
    os << "<text x=\"" << num(x) << "\" y=\"" << num(bottom + 16) << "\" font-size=\"10\" text-anchor=\"middle\">"
       << tick_label(t) << "</text>\n";
  }
  for (double t : ticks(std::min(sy.d0, sy.d1), std::max(sy.d0, sy.d1), 4)) {
    const double y = sy(t);
    os << "<line x1=\"" << num(left - 4) << "\" y1=\"" << num(y) << "\" x2=\"" << num(left) << "\" y2=\"" << num(y)
       << "\" stroke=\"#333\"/>";
    os << "<text x=\"" << num(left - 6) << "\" y=\"" << num(y + 3) << "\" font-size=\"10\" text-anchor=\"end\">"
       << tick_label(t) << "</text>\n";
  }
  os << "<text x=\"" << num(0.5 * (left + right)) << "\" y=\"" << num(bottom + 32)
     << "\" font-size=\"12\" text-anchor=\"middle\">" << escape(xlabel) << "</text>\n";
  os << "<text x=\"" << num(left - 40) << "\" y=\"" << num(0.5 * (top + bottom))
     << "\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 " << num(left - 40) << ' '
     << num(0.5 * (top + bottom)) << ")\">" << escape(ylabel) << "</text>\n";
}

void polyline(std::ostringstream& os, const std::vector<double>& xs, const std::vector<double>& ys, const Scale& sx,
              const Scale& sy, const std::string& color) {
  os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
  for (std::size_t i = 0; i < xs.size(); ++i) {
    os << num(sx(xs[i])) << ',' << num(sy(ys[i])) << (i + 1 < xs.size() ? " " : "");
  }
  os << "\"/>\n";
}

std::string header(double width, double height) {
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width) << "\" height=\"" << num(height)
     << "\" viewBox=\"0 0 " << num(width) << ' ' << num(height) << "\" font-family=\"sans-serif\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  return os.str();
}

}  // namespace

std::string render_trajectory_svg(const std::vector<ppo::TrajectoryRow>& rows, const TrajectoryPlotOptions& opts) {
  const double L = opts.length;
  std::vector<double> east, north;
  for (const auto& r : rows) {
    east.push_back(r.y / L);
    north.push_back(r.x / L);
  }
  double e_lo = std::min(opts.training_xi.lo, opts.goal.g_y - opts.goal.tolerance);
  double e_hi = std::max(opts.training_xi.hi, opts.goal.g_y + opts.goal.tolerance);
  double n_lo = std::min(opts.training_eta.lo, opts.goal.g_x - opts.goal.tolerance);
  double n_hi = std::max(opts.training_eta.hi, opts.goal.g_x + opts.goal.tolerance);
  for (std::size_t i = 0; i < east.size(); ++i) {
    e_lo = std::min(e_lo, east[i]);
    e_hi = std::max(e_hi, east[i]);
    n_lo = std::min(n_lo, north[i]);
    n_hi = std::max(n_hi, north[i]);
  }
  e_lo -= 1.0;
  e_hi += 1.0;
  n_lo -= 1.0;
  n_hi += 1.0;
  // Equal aspect ratio.
  const double span = std::max(e_hi - e_lo, n_hi - n_lo);
  const double ec = 0.5 * (e_lo + e_hi), nc = 0.5 * (n_lo + n_hi);
  e_lo = ec - 0.5 * span;
  e_hi = ec + 0.5 * span;
  n_lo = nc - 0.5 * span;
  n_hi = nc + 0.5 * span;

  const double margin_l = 60, margin_t = 40, size = 560;
  const Scale sx{e_lo, e_hi, margin_l, margin_l + size};
  const Scale sy{n_lo, n_hi, margin_t + size, margin_t};

  std::ostringstream os;
  os << header(margin_l + size + 20, margin_t + size + 50);
  if (!opts.title.empty()) {
    os << "<text x=\"" << num(margin_l + 0.5 * size) << "\" y=\"24\" font-size=\"14\" text-anchor=\"middle\">"
       << escape(opts.title) << "</text>\n";
  }
  axis_frame(os, sx, sy, "xi = y / L (east)", "eta = x / L (north)");

  os << "<rect x=\"" << num(sx(opts.training_xi.lo)) << "\" y=\"" << num(sy(opts.training_eta.hi)) << "\" width=\""
     << num(sx(opts.training_xi.hi) - sx(opts.training_xi.lo)) << "\" height=\""
     << num(sy(opts.training_eta.lo) - sy(opts.training_eta.hi))
     << "\" fill=\"none\" stroke=\"#999\" stroke-dasharray=\"4 3\"/>\n";
  const double radius = opts.goal.tolerance * (sx.p1 - sx.p0) / (sx.d1 - sx.d0);
  os << "<circle cx=\"" << num(sx(opts.goal.g_y)) << "\" cy=\"" << num(sy(opts.goal.g_x)) << "\" r=\"" << num(radius)
     << "\" fill=\"none\" stroke=\"red\" stroke-width=\"1.5\"/>\n";

  if (!rows.empty()) {
    polyline(os, east, north, sx, sy, "#1f4e9c");
    // Hull outline in body coordinates (ship lengths): forward, starboard.
    const double hb = 0.5 * opts.breadth / L;
    const std::vector<std::pair<double, double>> hull{{0.5, 0.0}, {0.3, hb}, {-0.5, hb}, {-0.5, -hb}, {0.3, -hb}};
    long last_bucket = -1;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const long bucket = static_cast<long>(std::floor((rows[i].t + 1e-9) / opts.glyph_every_s));
      if (i != 0 && bucket == last_bucket) {
        continue;
      }
      last_bucket = bucket;
      const double psi = rows[i].psi_deg * std::numbers::pi / 180.0;
      os << "<polygon fill=\"#c9d8f0\" stroke=\"#1f4e9c\" points=\"";
      for (std::size_t k = 0; k < hull.size(); ++k) {
        const auto [f, s] = hull[k];
        const double n = north[i] + f * std::cos(psi) - s * std::sin(psi);
        const double e = east[i] + f * std::sin(psi) + s * std::cos(psi);
        os << num(sx(e)) << ',' << num(sy(n)) << (k + 1 < hull.size() ? " " : "");
      }
      os << "\"/>\n";
    }
  }
  os << "</svg>\n";
  return os.str();
}

std::string render_timeseries_svg(const std::vector<ppo::TrajectoryRow>& rows, double delta_max,
                                  const std::string& title) {
  std::vector<double> t, n, delta, u, reward;
  for (const auto& r : rows) {
    t.push_back(r.t);
    n.push_back(r.n);
    delta.push_back(r.delta_deg);
    u.push_back(r.u);
    reward.push_back(r.reward);
  }
  const double t_lo = t.empty() ? 0.0 : std::min(0.0, t.front());
  const double t_hi = t.empty() || t.back() <= t_lo ? t_lo + 1.0 : t.back();

  struct Panel {
    const std::vector<double>* values;
    std::string label;
    std::pair<double, double> range;
  };
  const std::vector<Panel> panels{{&n, "n (rps)", padded_range(n)},
                                  {&delta, "delta (deg)", {-delta_max, delta_max}},
                                  {&u, "u (m/s)", padded_range(u)},
                                  {&reward, "reward", padded_range(reward)}};

  const double margin_l = 70, margin_t = 40, width = 640, height = 130, gap = 45;
  std::ostringstream os;
  os << header(margin_l + width + 20, margin_t + panels.size() * (height + gap) + 10);
  if (!title.empty()) {
    os << "<text x=\"" << num(margin_l + 0.5 * width) << "\" y=\"24\" font-size=\"14\" text-anchor=\"middle\">"
       << escape(title) << "</text>\n";
  }
  for (std::size_t p = 0; p < panels.size(); ++p) {
    const double top = margin_t + p * (height + gap);
    const Scale sx{t_lo, t_hi, margin_l, margin_l + width};
    const Scale sy{panels[p].range.first, panels[p].range.second, top + height, top};
    axis_frame(os, sx, sy, p + 1 == panels.size() ? "t (s)" : "", panels[p].label);
    if (!t.empty()) {
      polyline(os, t, *panels[p].values, sx, sy, "#1f4e9c");
    }
  }
  os << "</svg>\n";
  return os.str();
}

std::string render_reward_svg(const std::vector<double>& steps, const std::vector<double>& smoothed,
                              const std::string& title) {
  const double margin_l = 70, margin_t = 40, width = 640, height = 320;
  const double x_lo = steps.empty() ? 0.0 : steps.front();
  const double x_hi = steps.empty() || steps.back() <= x_lo ? x_lo + 1.0 : steps.back();
  const auto yr = padded_range(smoothed);
  const Scale sx{x_lo, x_hi, margin_l, margin_l + width};
  const Scale sy{yr.first, yr.second, margin_t + height, margin_t};
  std::ostringstream os;
  os << header(margin_l + width + 20, margin_t + height + 50);
  if (!title.empty()) {
    os << "<text x=\"" << num(margin_l + 0.5 * width) << "\" y=\"24\" font-size=\"14\" text-anchor=\"middle\">"
       << escape(title) << "</text>\n";
  }
  axis_frame(os, sx, sy, "global step", "smoothed reward");
  // Thin long curves to at most ~2000 points.
  const std::size_t stride = std::max<std::size_t>(1, steps.size() / 2000);
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < steps.size(); i += stride) {
    xs.push_back(steps[i]);
    ys.push_back(smoothed[i]);
  }
  if (!xs.empty()) {
    polyline(os, xs, ys, sx, sy, "#1f4e9c");
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace berth::harness
