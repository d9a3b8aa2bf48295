#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace cmada {

struct LossRecord {
  std::int64_t step = 0;
  std::string name;
  double value = 0.0;
  bool operator==(const LossRecord&) const = default;
};

/// Per-step loss log shared by every training stage. Serialized as one
/// tab-separated line per record: step, loss name, value.
class LossHistory {
 public:
  void add(std::int64_t step, std::string name, double value);
  const std::vector<LossRecord>& records() const { return records_; }
  /// Values of one loss in step order.
  std::vector<double> series(const std::string& name) const;
  bool operator==(const LossHistory&) const = default;

  std::string to_tsv() const;
  void save(const std::filesystem::path& path) const;
  static LossHistory load(const std::filesystem::path& path);

 private:
  std::vector<LossRecord> records_;
};

}  // namespace cmada
