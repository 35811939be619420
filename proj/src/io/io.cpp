#include "colora/io.hpp"

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "colora/error.hpp"

namespace colora::io {
namespace {

using json = nlohmann::json;
using Vec = Eigen::VectorXd;

constexpr char kSnapMagic[4] = {'S', 'N', 'P', '1'};
constexpr char kCkptMagic[4] = {'C', 'K', 'P', '1'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint32_t get_u32(const std::string& in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

void put_f64(std::string& out, double d) {
  const auto bits = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
}

double get_f64(const std::string& in, std::size_t at) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return std::bit_cast<double>(bits);
}

std::string frame(const char (&magic)[4], const json& header) {
  const std::string h = header.dump();
  std::string out(magic, 4);
  put_u32(out, static_cast<std::uint32_t>(h.size()));
  out += h;
  return out;
}

// Returns the header and the payload offset.
std::pair<json, std::size_t> unframe(const std::string& bytes, const char (&magic)[4], const char* what) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), magic, 4) != 0)
    throw FormatError(std::string(what) + ": bad magic");
  const std::uint32_t len = get_u32(bytes, 4);
  if (bytes.size() < 8 + static_cast<std::size_t>(len)) throw FormatError(std::string(what) + ": truncated header");
  json h;
  try {
    h = json::parse(bytes.begin() + 8, bytes.begin() + 8 + len);
  } catch (const json::exception& e) {
    throw FormatError(std::string(what) + ": unreadable header: " + e.what());
  }
  return {std::move(h), 8 + static_cast<std::size_t>(len)};
}

void check_payload(const std::string& bytes, std::size_t offset, std::size_t doubles, const char* what) {
  if (bytes.size() != offset + 8 * doubles)
    throw FormatError(std::string(what) + ": payload holds " + std::to_string(bytes.size() - offset) +
                      " bytes, header declares " + std::to_string(8 * doubles));
}

template <class T>
T field(const json& j, const char* key, const char* what) {
  if (!j.contains(key)) throw FormatError(std::string(what) + ": header lacks '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw FormatError(std::string(what) + ": bad '" + key + "': " + e.what());
  }
}

json arch_to_json(const net::ArchConfig& a) {
  return json{{"in_dim", a.in_dim},
              {"out_dim", a.out_dim},
              {"depth", a.depth},
              {"width", a.width},
              {"rank", a.rank},
              {"latent_dim", a.latent_dim},
              {"mode", a.mode == net::LatentMode::Diag ? "diag" : "scalar"},
              {"periodic", a.periodic},
              {"period", a.period},
              {"hyper_depth", a.hyper_depth},
              {"hyper_width", a.hyper_width},
              {"mu_dim", a.mu_dim}};
}

net::ArchConfig arch_from_json(const json& j) {
  const char* w = "checkpoint architecture";
  net::ArchConfig a;
  a.in_dim = field<int>(j, "in_dim", w);
  a.out_dim = field<int>(j, "out_dim", w);
  a.depth = field<int>(j, "depth", w);
  a.width = field<int>(j, "width", w);
  a.rank = field<int>(j, "rank", w);
  a.latent_dim = field<int>(j, "latent_dim", w);
  const auto mode = field<std::string>(j, "mode", w);
  if (mode != "diag" && mode != "scalar") throw FormatError("checkpoint architecture: unknown mode '" + mode + "'");
  a.mode = mode == "diag" ? net::LatentMode::Diag : net::LatentMode::Scalar;
  a.periodic = field<bool>(j, "periodic", w);
  a.period = field<double>(j, "period", w);
  a.hyper_depth = field<int>(j, "hyper_depth", w);
  a.hyper_width = field<int>(j, "hyper_width", w);
  a.mu_dim = field<int>(j, "mu_dim", w);
  return a;
}

}  // namespace

std::string encode_snapshot(const SnapshotFile& s) {
  const auto& tr = s.trajectory;
  const Eigen::Index per_frame = s.grid.size() * s.fields;
  for (const auto& fr : tr.frames)
    if (fr.size() != per_frame) throw InvalidInput("write_snapshot: frame size does not match grid and fields");
  if (tr.frames.size() != tr.times.size()) throw InvalidInput("write_snapshot: frame and time counts differ");
  const json h{{"problem", s.problem},
               {"mu", tr.mu},
               {"t_grid", tr.times},
               {"x_shape", s.grid.n},
               {"x_lo", s.grid.lo},
               {"x_hi", s.grid.hi},
               {"fields", s.fields},
               {"dtype", "f64"},
               {"layout", "t,field,row-major-x"}};
  std::string out = frame(kSnapMagic, h);
  out.reserve(out.size() + 8 * tr.frames.size() * static_cast<std::size_t>(per_frame));
  for (const auto& fr : tr.frames)
    for (Eigen::Index i = 0; i < fr.size(); ++i) put_f64(out, fr(i));
  return out;
}

SnapshotFile decode_snapshot(const std::string& bytes) {
  const char* w = "SNP1";
  auto [h, off] = unframe(bytes, kSnapMagic, w);
  if (field<std::string>(h, "dtype", w) != "f64") throw FormatError("SNP1: unsupported dtype");
  if (field<std::string>(h, "layout", w) != "t,field,row-major-x") throw FormatError("SNP1: unsupported layout");
  SnapshotFile s;
  s.problem = field<std::string>(h, "problem", w);
  s.fields = field<int>(h, "fields", w);
  s.grid.n = field<std::vector<int>>(h, "x_shape", w);
  s.grid.lo = h.contains("x_lo") ? field<std::vector<double>>(h, "x_lo", w) : std::vector<double>(s.grid.n.size(), 0.0);
  s.grid.hi = h.contains("x_hi") ? field<std::vector<double>>(h, "x_hi", w) : std::vector<double>(s.grid.n.size(), 1.0);
  if (s.fields < 1 || s.grid.n.empty() || s.grid.lo.size() != s.grid.n.size() || s.grid.hi.size() != s.grid.n.size())
    throw FormatError("SNP1: inconsistent shape");
  for (int n : s.grid.n)
    if (n < 1) throw FormatError("SNP1: non-positive grid size");
  s.trajectory.mu = field<double>(h, "mu", w);
  s.trajectory.times = field<std::vector<double>>(h, "t_grid", w);
  const auto per_frame = static_cast<std::size_t>(s.grid.size()) * static_cast<std::size_t>(s.fields);
  check_payload(bytes, off, per_frame * s.trajectory.times.size(), w);
  for (std::size_t k = 0; k < s.trajectory.times.size(); ++k) {
    pde::Vec fr(static_cast<Eigen::Index>(per_frame));
    for (std::size_t i = 0; i < per_frame; ++i) fr(static_cast<Eigen::Index>(i)) = get_f64(bytes, off + 8 * (k * per_frame + i));
    s.trajectory.frames.push_back(std::move(fr));
  }
  return s;
}

std::string encode_checkpoint(const train::Checkpoint& c) {
  json params = json::array();
  for (const auto& e : c.params.entries()) params.push_back({{"name", e.name}, {"shape", {e.rows, e.cols}}});
  json history = json::array();
  for (const auto& r : c.history) history.push_back({r.step, r.lr, r.loss});
  const bool moments = c.adam.m.size() > 0;
  if (moments && (c.adam.m.size() != c.params.size() || c.adam.v.size() != c.params.size()))
    throw InvalidInput("write_checkpoint: optimizer state does not match parameters");
  const json h{{"problem", c.problem},
               {"architecture", arch_to_json(c.arch)},
               {"normalizer",
                {{"in_mean", c.norm.in_mean}, {"in_std", c.norm.in_std}, {"x_lo", c.norm.x_lo}, {"x_hi", c.norm.x_hi}}},
               {"parameters", params},
               {"train_mu", c.train_mus},
               {"history", history},
               {"adam", {{"step", c.adam.step}, {"moments", moments}}},
               {"dtype", "f64"}};
  std::string out = frame(kCkptMagic, h);
  const Vec& p = c.params.flat();
  for (Eigen::Index i = 0; i < p.size(); ++i) put_f64(out, p(i));
  if (moments) {
    for (Eigen::Index i = 0; i < p.size(); ++i) put_f64(out, c.adam.m(i));
    for (Eigen::Index i = 0; i < p.size(); ++i) put_f64(out, c.adam.v(i));
  }
  return out;
}

train::Checkpoint decode_checkpoint(const std::string& bytes) {
  const char* w = "CKP1";
  auto [h, off] = unframe(bytes, kCkptMagic, w);
  train::Checkpoint c;
  c.problem = field<std::string>(h, "problem", w);
  c.arch = arch_from_json(field<json>(h, "architecture", w));
  const json nj = field<json>(h, "normalizer", w);
  c.norm.in_mean = field<std::vector<double>>(nj, "in_mean", w);
  c.norm.in_std = field<std::vector<double>>(nj, "in_std", w);
  c.norm.x_lo = field<std::vector<double>>(nj, "x_lo", w);
  c.norm.x_hi = field<std::vector<double>>(nj, "x_hi", w);
  c.train_mus = field<std::vector<double>>(h, "train_mu", w);
  for (const auto& r : field<json>(h, "history", w)) {
    if (!r.is_array() || r.size() != 3) throw FormatError("CKP1: bad history record");
    c.history.push_back({r[0].get<long>(), r[1].get<double>(), r[2].get<double>()});
  }
  const json aj = field<json>(h, "adam", w);
  c.adam.step = field<long>(aj, "step", w);
  const bool moments = field<bool>(aj, "moments", w);

  // The stored layout must be the canonical one for this architecture.
  try {
    c.params = net::make_param_store(net::make_colora_net(c.arch), net::make_hyper_net(c.arch));
  } catch (const Error& e) {
    throw FormatError(std::string("CKP1: invalid architecture: ") + e.what());
  }
  const json pj = field<json>(h, "parameters", w);
  const auto& entries = c.params.entries();
  if (!pj.is_array() || pj.size() != entries.size()) throw FormatError("CKP1: parameter list does not match architecture");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto shape = field<std::vector<long>>(pj[i], "shape", w);
    if (field<std::string>(pj[i], "name", w) != entries[i].name || shape.size() != 2 || shape[0] != entries[i].rows ||
        shape[1] != entries[i].cols)
      throw FormatError("CKP1: parameter '" + entries[i].name + "' does not match architecture");
  }
  const auto np = static_cast<std::size_t>(c.params.size());
  check_payload(bytes, off, moments ? 3 * np : np, w);
  Vec& p = c.params.flat();
  for (std::size_t i = 0; i < np; ++i) p(static_cast<Eigen::Index>(i)) = get_f64(bytes, off + 8 * i);
  if (moments) {
    c.adam.m.resize(static_cast<Eigen::Index>(np));
    c.adam.v.resize(static_cast<Eigen::Index>(np));
    for (std::size_t i = 0; i < np; ++i) {
      c.adam.m(static_cast<Eigen::Index>(i)) = get_f64(bytes, off + 8 * (np + i));
      c.adam.v(static_cast<Eigen::Index>(i)) = get_f64(bytes, off + 8 * (2 * np + i));
    }
  }
  return c;
}

void write_file_atomic(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open '" + tmp.string() + "' for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("write to '" + tmp.string() + "' failed");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename '" + tmp.string() + "': " + ec.message());
}

std::string read_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_snapshot(const fs::path& path, const SnapshotFile& s) { write_file_atomic(path, encode_snapshot(s)); }
SnapshotFile read_snapshot(const fs::path& path) { return decode_snapshot(read_file(path)); }
void write_checkpoint(const fs::path& path, const train::Checkpoint& c) {
  write_file_atomic(path, encode_checkpoint(c));
}
train::Checkpoint read_checkpoint(const fs::path& path) { return decode_checkpoint(read_file(path)); }

void write_dataset(const fs::path& dir, const pde::SnapshotSet& s) {
  Csv manifest({"index", "mu", "file"});
  for (std::size_t i = 0; i < s.trajectories.size(); ++i) {
    const std::string name = "traj_" + std::to_string(i) + ".snp";
    write_snapshot(dir / name, SnapshotFile{s.problem, s.grid, s.fields, s.trajectories[i]});
    manifest.row({std::to_string(i), format_double(s.trajectories[i].mu), name});
  }
  manifest.write(dir / "manifest.csv");
}

pde::SnapshotSet read_dataset(const fs::path& dir) {
  const auto rows = read_csv(dir / "manifest.csv");
  if (rows.size() < 2 || rows[0] != std::vector<std::string>{"index", "mu", "file"})
    throw FormatError("dataset manifest in '" + dir.string() + "' is empty or malformed");
  pde::SnapshotSet s;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != 3) throw FormatError("dataset manifest: bad row " + std::to_string(r));
    SnapshotFile f = read_snapshot(dir / rows[r][2]);
    if (r == 1) {
      s.problem = f.problem;
      s.grid = f.grid;
      s.fields = f.fields;
      s.times = f.trajectory.times;
    } else if (f.problem != s.problem || !(f.grid == s.grid) || f.fields != s.fields || f.trajectory.times != s.times) {
      throw FormatError("dataset: '" + rows[r][2] + "' does not share the problem, grid and times of the set");
    }
    s.trajectories.push_back(std::move(f.trajectory));
  }
  return s;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

Csv::Csv(std::vector<std::string> header) : header_(std::move(header)) {}

Csv& Csv::row(const std::vector<std::string>& cells) {
  if (cells.size() != header_.size())
    throw InvalidInput("csv: row has " + std::to_string(cells.size()) + " cells, header has " +
                       std::to_string(header_.size()));
  rows_.push_back(cells);
  return *this;
}

std::string Csv::str() const {
  std::string out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += ',';
      out += cells[i];
    }
    out += '\n';
  };
  line(header_);
  for (const auto& r : rows_) line(r);
  return out;
}

void Csv::write(const fs::path& path) const { write_file_atomic(path, str()); }

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::vector<std::vector<std::string>> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t start = 0;
    for (;;) {
      const std::size_t comma = line.find(',', start);
      cells.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    out.push_back(std::move(cells));
  }
  return out;
}

}  // namespace colora::io
