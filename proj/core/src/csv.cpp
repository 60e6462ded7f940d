#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <vector>

#include "w2flow/measures.hpp"

namespace w2flow {
namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) {
    const auto b = field.find_first_not_of(" \t\r");
    const auto e = field.find_last_not_of(" \t\r");
    fields.push_back(b == std::string::npos ? std::string{} : field.substr(b, e - b + 1));
  }
  return fields;
}

}  // namespace

ParticleCloud read_cloud_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open point-cloud file: " + path);

  std::string line;
  if (!std::getline(in, line)) throw Error(path + ": missing header row");
  const auto header = split_fields(line);
  if (header.empty()) throw Error(path + ": empty header row");

  const bool weighted = header.back() == "weight";
  const std::size_t d = weighted ? header.size() - 1 : header.size();
  if (d == 0) throw Error(path + ": no coordinate columns");
  for (std::size_t k = 0; k < d; ++k) {
    if (header[k] != "x" + std::to_string(k))
      throw Error(path + ": header column " + std::to_string(k) + " should be x" + std::to_string(k));
  }

  std::vector<double> coords;
  std::vector<double> weights;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size())
      throw Error(path + ":" + std::to_string(row) + ": expected " + std::to_string(header.size()) +
                  " columns, got " + std::to_string(fields.size()));
    for (std::size_t k = 0; k < fields.size(); ++k) {
      double v = 0.0;
      try {
        std::size_t used = 0;
        v = std::stod(fields[k], &used);
        if (used != fields[k].size()) throw std::invalid_argument("trailing characters");
      } catch (const std::exception&) {
        throw Error(path + ":" + std::to_string(row) + ": cannot parse '" + fields[k] + "'");
      }
      if (weighted && k == d) {
        weights.push_back(v);
      } else {
        coords.push_back(v);
      }
    }
  }

  const auto n = static_cast<Eigen::Index>(coords.size() / d);
  if (n == 0) throw Error("empty cloud");
  Matrix points(n, static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(d); ++k) points(i, k) = coords[i * d + k];

  if (!weighted) return uniform_cloud(std::move(points));
  Vector w = Eigen::Map<const Vector>(weights.data(), n);
  return ParticleCloud(std::move(points), std::move(w));
}

void write_cloud_csv(const ParticleCloud& cloud, const std::string& path, bool with_weights) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write point-cloud file: " + path);
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (Eigen::Index k = 0; k < cloud.dim(); ++k) out << (k ? "," : "") << 'x' << k;
  if (with_weights) out << ",weight";
  out << '\n';
  for (Eigen::Index i = 0; i < cloud.size(); ++i) {
    for (Eigen::Index k = 0; k < cloud.dim(); ++k) out << (k ? "," : "") << cloud.points()(i, k);
    if (with_weights) out << ',' << cloud.weights()[i];
    out << '\n';
  }
  if (!out) throw Error("write failed: " + path);
}

}  // namespace w2flow
