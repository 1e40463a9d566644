#pragma once

#include <json.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace mcrd::report {

using Json = nlohmann::ordered_json;

inline std::string fmt(double x) {
  if (!std::isfinite(x)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12e", x);
  return buf;
}

namespace detail {

inline bool is_scalar(const Json& j) { return !j.is_object() && !j.is_array(); }

inline void dump(const Json& j, std::ostringstream& os, int depth) {
  const std::string pad(2 * depth + 2, ' '), close(2 * depth, ' ');
  if (j.is_object()) {
    if (j.empty()) {
      os << "{}";
      return;
    }
    os << "{\n";
    bool first = true;
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (!first) os << ",\n";
      first = false;
      os << pad << Json(it.key()).dump() << ": ";
      dump(it.value(), os, depth + 1);
    }
    os << "\n" << close << "}";
  } else if (j.is_array()) {
    if (std::all_of(j.begin(), j.end(), is_scalar)) {
      os << "[";
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) os << ", ";
        dump(j[i], os, depth + 1);
      }
      os << "]";
      return;
    }
    os << "[\n";
    for (std::size_t i = 0; i < j.size(); ++i) {
      if (i) os << ",\n";
      os << pad;
      dump(j[i], os, depth + 1);
    }
    os << "\n" << close << "]";
  } else if (j.is_number_float()) {
    const double x = j.get<double>();
    os << (std::isfinite(x) ? fmt(x) : "null");
  } else {
    os << j.dump();
  }
}

}  // namespace detail

// Stable text form: insertion-ordered keys, floats as %.12e, non-finite floats as null.
inline std::string dump(const Json& j) {
  std::ostringstream os;
  detail::dump(j, os, 0);
  os << "\n";
  return os.str();
}

// Columns of equal length under a header line.
inline std::string csv(const std::vector<std::string>& header, const std::vector<Eigen::ArrayXd>& cols) {
  std::ostringstream os;
  for (std::size_t c = 0; c < header.size(); ++c) os << (c ? "," : "") << header[c];
  os << "\n";
  const Eigen::Index n = cols.empty() ? 0 : cols.front().size();
  for (Eigen::Index i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < cols.size(); ++c) os << (c ? "," : "") << fmt(cols[c](i));
    os << "\n";
  }
  return os.str();
}

struct Series {
  std::string name;
  std::vector<double> x, y;
};

struct PlotSpec {
  std::string title, xlabel, ylabel;
  bool logx = false, logy = false;
};

// Self-contained SVG line plot, one polyline per series.
inline std::string svg_plot(const PlotSpec& spec, const std::vector<Series>& series) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  const double W = 640, H = 420, L = 70, R = 150, T = 40, B = 50;
  auto tx = [&](double x) { return spec.logx ? std::log10(x) : x; };
  auto ty = [&](double y) { return spec.logy ? std::log10(std::abs(y)) : y; };
  auto ok = [&](double x, double y) {
    return std::isfinite(x) && std::isfinite(y) && (!spec.logx || x > 0) && (!spec.logy || y != 0);
  };
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i)
      if (ok(s.x[i], s.y[i])) {
        x0 = std::min(x0, tx(s.x[i]));
        x1 = std::max(x1, tx(s.x[i]));
        y0 = std::min(y0, ty(s.y[i]));
        y1 = std::max(y1, ty(s.y[i]));
      }
  if (!(x0 < x1)) x0 -= 0.5, x1 += 0.5;
  if (!(y0 < y1)) y0 -= 0.5, y1 += 0.5;
  const double ym = 0.05 * (y1 - y0);
  y0 -= ym;
  y1 += ym;
  auto px = [&](double x) { return L + (tx(x) - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return H - B - (ty(y) - y0) / (y1 - y0) * (H - T - B); };
  auto num = [](double v) {
    char b[32];
    std::snprintf(b, sizeof b, "%.3f", v);
    return std::string(b);
  };
  auto label = [](double v, bool lg) {
    char b[32];
    std::snprintf(b, sizeof b, lg ? "1e%.2g" : "%.4g", v);
    return std::string(b);
  };
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
     << " " << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect x=\"0\" y=\"0\" width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
  os << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << W - L - R << "\" height=\"" << H - T - B
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  os << "<text x=\"" << L << "\" y=\"24\" font-size=\"14\">" << spec.title << "</text>\n";
  os << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">" << spec.xlabel
     << "</text>\n";
  os << "<text x=\"16\" y=\"" << (T + H - B) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
     << (T + H - B) / 2 << ")\">" << spec.ylabel << "</text>\n";
  os << "<text x=\"" << L << "\" y=\"" << H - B + 16 << "\" text-anchor=\"start\">" << label(x0, spec.logx)
     << "</text>\n";
  os << "<text x=\"" << W - R << "\" y=\"" << H - B + 16 << "\" text-anchor=\"end\">" << label(x1, spec.logx)
     << "</text>\n";
  os << "<text x=\"" << L - 4 << "\" y=\"" << H - B << "\" text-anchor=\"end\">" << label(y0, spec.logy) << "</text>\n";
  os << "<text x=\"" << L - 4 << "\" y=\"" << T + 10 << "\" text-anchor=\"end\">" << label(y1, spec.logy)
     << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* col = palette[k % 6];
    os << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"1.5\" points=\"";
    bool first = true;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!ok(s.x[i], s.y[i])) continue;
      os << (first ? "" : " ") << num(px(s.x[i])) << "," << num(py(s.y[i]));
      first = false;
    }
    os << "\"/>\n";
    const double ly = T + 16 + 18 * k;
    os << "<line x1=\"" << W - R + 10 << "\" y1=\"" << ly - 4 << "\" x2=\"" << W - R + 30 << "\" y2=\"" << ly - 4
       << "\" stroke=\"" << col << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << W - R + 34 << "\" y=\"" << ly << "\">" << s.name << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

inline std::vector<double> to_vec(const Eigen::ArrayXd& a) { return {a.data(), a.data() + a.size()}; }

}  // namespace mcrd::report
