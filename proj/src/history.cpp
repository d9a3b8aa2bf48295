#include "cmada/history.hpp"

#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "cmada/error.hpp"

namespace cmada {

void LossHistory::add(std::int64_t step, std::string name, double value) {
  records_.push_back({step, std::move(name), value});
}

std::vector<double> LossHistory::series(const std::string& name) const {
  std::vector<double> out;
  for (const auto& r : records_) {
    if (r.name == name) out.push_back(r.value);
  }
  return out;
}

std::string LossHistory::to_tsv() const {
  std::string out = "step\tloss\tvalue\n";
  for (const auto& r : records_) out += fmt::format("{}\t{}\t{:.17g}\n", r.step, r.name, r.value);
  return out;
}

void LossHistory::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_tsv();
}

LossHistory LossHistory::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  LossHistory h;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    LossRecord r;
    std::string value;
    if (!(ls >> r.step >> r.name >> value)) throw IoError("malformed loss history line: " + line);
    r.value = std::stod(value);
    h.records_.push_back(std::move(r));
  }
  return h;
}

}  // namespace cmada
