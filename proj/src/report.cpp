#include "mbq/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "mbq/errors.hpp"

namespace mbq {

std::string format_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

CsvWriter::CsvWriter(const std::string& path, const std::string& digest,
                     const std::vector<std::string>& header)
    : out_(path), path_(path), columns_(header.size()) {
  if (!out_) throw std::runtime_error("cannot write '" + path + "'");
  out_ << "# config_digest=" << digest << '\n';
  row(header);
}

void CsvWriter::row(const std::vector<std::string>& cells) {
  if (cells.size() != columns_) throw std::logic_error("csv row width mismatch in " + path_);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out_ << ',';
    out_ << cells[i];
  }
  out_ << '\n';
}

void CsvWriter::close() {
  if (!out_.is_open()) return;
  out_.close();
  if (!out_) throw std::runtime_error("write failed for '" + path_ + "'");
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  CsvTable t;
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (line.rfind("# config_digest=", 0) == 0) {
      t.digest = line.substr(16);
      continue;
    }
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!have_header) {
      t.header = std::move(cells);
      have_header = true;
    } else {
      t.rows.push_back(std::move(cells));
    }
  }
  return t;
}

void write_scan_csv(const ScanReport& report, const std::string& path, const std::string& digest) {
  CsvWriter w(path, digest, {"direction_index", "batch_id", "slope", "curvature"});
  for (Index i = 0; i < report.num_directions(); ++i) {
    for (Index j = 0; j < report.num_batches(); ++j) {
      w.row({std::to_string(i), report.batch_ids[static_cast<std::size_t>(j)],
             format_double(report.slopes(i, j)), format_double(report.curvatures(i, j))});
    }
    w.row({std::to_string(i), "FULL", format_double(report.full_slopes(i)),
           format_double(report.full_curvatures(i))});
  }
  w.close();
}

void write_overlap_csv(const OverlapMatrix& omega, const std::string& path, const std::string& digest) {
  CsvWriter w(path, digest, {"i", "j", "omega"});
  for (Index i = 0; i < omega.omega.rows(); ++i) {
    for (Index j = 0; j < omega.omega.cols(); ++j) {
      w.row({std::to_string(i), std::to_string(j), format_double(omega.omega(i, j))});
    }
  }
  w.close();
}

void write_json(const nlohmann::json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

std::string embedded_digest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  const auto ends_with = [&](const std::string& ext) {
    return path.size() >= ext.size() && path.compare(path.size() - ext.size(), ext.size(), ext) == 0;
  };
  if (ends_with(".json")) {
    try {
      const auto j = nlohmann::json::parse(in);
      return j.value("config_digest", "");
    } catch (const nlohmann::json::exception&) {
      throw ValidationError("'" + path + "' is not valid JSON");
    }
  }
  const std::string marker = "config_digest=";
  std::string line;
  for (int n = 0; n < 4 && std::getline(in, line); ++n) {
    const auto pos = line.find(marker);
    if (pos == std::string::npos) continue;
    std::string rest = line.substr(pos + marker.size());
    const auto end = rest.find_first_not_of("0123456789abcdef");
    return rest.substr(0, end);
  }
  return "";
}

namespace {

constexpr double kWidth = 640;
constexpr double kHeight = 420;
constexpr double kLeft = 70;
constexpr double kRight = 150;
constexpr double kTop = 40;
constexpr double kBottom = 50;

const char* palette(std::size_t i) {
  static const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                 "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
  return colors[i % 8];
}

std::string esc(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string fmt_tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

}  // namespace

void write_line_plot(const std::vector<Series>& series, const PlotSpec& spec, const std::string& path,
                     const std::string& digest) {
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  const auto ty = [&](double y) { return spec.log_y ? std::log10(y) : y; };
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i]) || (spec.log_y && s.y[i] <= 0.0)) continue;
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, ty(s.y[i]));
      ymax = std::max(ymax, ty(s.y[i]));
    }
  }
  if (!(xmin <= xmax)) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  const double pw = kWidth - kLeft - kRight;
  const double ph = kHeight - kTop - kBottom;
  const auto px = [&](double x) { return kLeft + (x - xmin) / (xmax - xmin) * pw; };
  const auto py = [&](double y) { return kTop + (1.0 - (ty(y) - ymin) / (ymax - ymin)) * ph; };

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  out << "<!-- config_digest=" << digest << " -->\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << kLeft << "\" y=\"22\" font-size=\"14\">" << esc(spec.title) << "</text>\n";
  out << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double fx = xmin + (xmax - xmin) * t / 4.0;
    const double fy = ymin + (ymax - ymin) * t / 4.0;
    const double yy = kTop + (1.0 - t / 4.0) * ph;
    out << "<text x=\"" << px(fx) << "\" y=\"" << kTop + ph + 16 << "\" text-anchor=\"middle\">"
        << fmt_tick(fx) << "</text>\n";
    out << "<text x=\"" << kLeft - 6 << "\" y=\"" << yy + 4 << "\" text-anchor=\"end\">"
        << (spec.log_y ? "1e" + fmt_tick(fy) : fmt_tick(fy)) << "</text>\n";
  }
  out << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kHeight - 12 << "\" text-anchor=\"middle\">"
      << esc(spec.x_label) << "</text>\n";
  out << "<text transform=\"translate(16," << kTop + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
      << esc(spec.y_label) << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    std::ostringstream pts;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.y[i]) || (spec.log_y && s.y[i] <= 0.0)) continue;
      if (s.markers_only) {
        out << "<circle cx=\"" << px(s.x[i]) << "\" cy=\"" << py(s.y[i]) << "\" r=\"2.5\" fill=\""
            << palette(k) << "\"/>\n";
      } else {
        pts << px(s.x[i]) << ',' << py(s.y[i]) << ' ';
      }
    }
    if (!s.markers_only) {
      out << "<polyline fill=\"none\" stroke=\"" << palette(k) << "\" stroke-width=\"1.5\" points=\""
          << pts.str() << "\"/>\n";
    }
    out << "<text x=\"" << kWidth - kRight + 10 << "\" y=\"" << kTop + 14 * (k + 1) << "\" fill=\""
        << palette(k) << "\">" << esc(s.label) << "</text>\n";
  }
  out << "</svg>\n";
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

void write_overlap_svg(const OverlapMatrix& omega, const std::string& path, const std::string& digest) {
  const Index rows = omega.omega.rows();
  const Index cols = omega.omega.cols();
  const double cell = std::max(2.0, 400.0 / static_cast<double>(std::max<Index>(1, std::max(rows, cols))));
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << cell * cols + 20 << "\" height=\""
      << cell * rows + 20 << "\">\n";
  out << "<!-- config_digest=" << digest << " -->\n";
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) {
      const int g = static_cast<int>(std::lround(255.0 * overlap_gray(omega.omega(i, j))));
      out << "<rect x=\"" << 10 + cell * j << "\" y=\"" << 10 + cell * i << "\" width=\"" << cell
          << "\" height=\"" << cell << "\" fill=\"rgb(" << g << ',' << g << ',' << g << ")\"/>\n";
    }
  }
  out << "</svg>\n";
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

}  // namespace mbq
