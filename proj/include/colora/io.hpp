#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "colora/pde/dataset.hpp"
#include "colora/pretrain.hpp"

namespace colora::io {

namespace fs = std::filesystem;

/// One trajectory in SNP1 form: "SNP1", u32 LE header length, JSON header,
/// little-endian f64 payload laid out as (time, field, row-major x).
struct SnapshotFile {
  std::string problem;
  pde::Grid grid;
  int fields = 1;
  pde::Trajectory trajectory;

  bool operator==(const SnapshotFile&) const = default;
};

std::string encode_snapshot(const SnapshotFile& s);
SnapshotFile decode_snapshot(const std::string& bytes);
void write_snapshot(const fs::path& path, const SnapshotFile& s);
SnapshotFile read_snapshot(const fs::path& path);

/// "CKP1", u32 LE header length, JSON header (architecture, normalizer,
/// parameter shapes in canonical order, training mu, loss history, optimizer
/// step), then the parameters as f64 LE followed by the Adam moments if present.
std::string encode_checkpoint(const train::Checkpoint& c);
train::Checkpoint decode_checkpoint(const std::string& bytes);
void write_checkpoint(const fs::path& path, const train::Checkpoint& c);
train::Checkpoint read_checkpoint(const fs::path& path);

/// A snapshot set as a directory: one SNP1 file per trajectory plus manifest.csv.
void write_dataset(const fs::path& dir, const pde::SnapshotSet& s);
pde::SnapshotSet read_dataset(const fs::path& dir);

/// Writes through a temporary file and a rename so readers never see partial output.
void write_file_atomic(const fs::path& path, const std::string& bytes);
std::string read_file(const fs::path& path);

/// Shortest decimal form that reads back to the same double.
std::string format_double(double v);

/// Minimal CSV table; doubles are written with format_double.
class Csv {
 public:
  explicit Csv(std::vector<std::string> header);
  Csv& row(const std::vector<std::string>& cells);
  std::string str() const;
  void write(const fs::path& path) const;
  std::size_t rows() const { return rows_.size(); }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

/// Parses a CSV written by Csv (no quoting); the first row is the header.
std::vector<std::vector<std::string>> read_csv(const fs::path& path);

}  // namespace colora::io
