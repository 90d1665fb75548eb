#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mbq/diagnostics.hpp"

namespace mbq {

/// Shortest-roundtrip-safe decimal: 17 significant digits.
std::string format_double(double x);

/// CSV files start with `# config_digest=<hex>`, then the header.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::string& digest, const std::vector<std::string>& header);
  void row(const std::vector<std::string>& cells);
  void close();

 private:
  std::ofstream out_;
  std::string path_;
  std::size_t columns_ = 0;
};

struct CsvTable {
  std::string digest;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

CsvTable read_csv(const std::string& path);

/// direction_index,batch_id,slope,curvature; the full-batch row uses FULL.
void write_scan_csv(const ScanReport& report, const std::string& path, const std::string& digest);
/// i,j,omega
void write_overlap_csv(const OverlapMatrix& omega, const std::string& path, const std::string& digest);

void write_json(const nlohmann::json& j, const std::string& path);

/// Reads the digest embedded in a csv, json or svg output file; empty if none.
std::string embedded_digest(const std::string& path);

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  bool markers_only = false;
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_y = false;
};

void write_line_plot(const std::vector<Series>& series, const PlotSpec& spec, const std::string& path,
                     const std::string& digest);
/// Grayscale heatmap of overlap_gray(omega).
void write_overlap_svg(const OverlapMatrix& omega, const std::string& path, const std::string& digest);

}  // namespace mbq
