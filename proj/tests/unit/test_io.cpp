#include <doctest.h>

#include <charconv>
#include <filesystem>

#include "colora/error.hpp"
#include "colora/io.hpp"
#include "colora/pde/problem.hpp"
#include "test_support.hpp"

using namespace colora;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("colora_test_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

io::SnapshotFile sample_snapshot() {
  io::SnapshotFile s;
  s.problem = "burgers2d";
  s.grid = pde::Grid::periodic({6, 5}, {0.0, 0.0}, {1.0, 1.0});
  s.fields = 2;
  s.trajectory.mu = 0.1 + 1e-17;
  s.trajectory.times = {0.0, 1.0 / 3.0, 0.7};
  for (int k = 0; k < 3; ++k) s.trajectory.frames.push_back(test::random_vector(60, 10 + k));
  return s;
}

train::Checkpoint sample_checkpoint(bool moments) {
  const auto problem = pde::make_problem("advection");
  pde::SnapshotSet data;
  data.problem = "advection";
  data.grid = problem->make_grid({16});
  data.times = {0.0, 0.5, 1.0};
  for (double mu : {0.6, 1.4}) {
    pde::Trajectory tr;
    tr.mu = mu;
    tr.times = data.times;
    for (int k = 0; k < 3; ++k) tr.frames.push_back(test::random_vector(16, k + 1));
    data.trajectories.push_back(tr);
  }
  net::ArchConfig arch;
  arch.depth = 3;
  arch.width = 5;
  arch.latent_dim = 2;
  arch.rank = 2;
  train::TrainConfig cfg;
  cfg.iterations = moments ? 3 : 0;
  cfg.log_every = 1;
  cfg.batch_x = 4;
  cfg.batch_t = 2;
  return train::pretrain(data, *problem, arch, cfg);
}

}  // namespace

TEST_CASE("SNP1 round trip is byte-identical") {
  const auto s = sample_snapshot();
  const std::string bytes = io::encode_snapshot(s);
  CHECK(bytes.substr(0, 4) == "SNP1");
  const auto back = io::decode_snapshot(bytes);
  CHECK(back == s);
  CHECK(io::encode_snapshot(back) == bytes);

  const fs::path dir = scratch_dir("snp");
  io::write_snapshot(dir / "a.snp", s);
  CHECK(io::read_file(dir / "a.snp") == bytes);
  CHECK(!fs::exists(dir / "a.snp.tmp"));
  CHECK(io::read_snapshot(dir / "a.snp") == s);
}

TEST_CASE("SNP1 rejects malformed input") {
  const std::string bytes = io::encode_snapshot(sample_snapshot());
  CHECK_THROWS_AS(io::decode_snapshot("XXXX" + bytes.substr(4)), FormatError);
  CHECK_THROWS_AS(io::decode_snapshot(bytes.substr(0, bytes.size() - 8)), FormatError);
  CHECK_THROWS_AS(io::decode_snapshot(bytes + "12345678"), FormatError);
  CHECK_THROWS_AS(io::decode_snapshot(bytes.substr(0, 6)), FormatError);
  std::string broken = bytes;
  broken[9] = '#';
  CHECK_THROWS_AS(io::decode_snapshot(broken), FormatError);
  auto bad = sample_snapshot();
  bad.trajectory.frames[1].resize(59);
  CHECK_THROWS_AS(io::encode_snapshot(bad), InvalidInput);
  CHECK_THROWS_AS(io::read_snapshot("/nonexistent/dir/x.snp"), IoError);
}

TEST_CASE("CKP1 round trip") {
  for (bool moments : {false, true}) {
    const auto c = sample_checkpoint(moments);
    CHECK((c.adam.m.size() > 0) == moments);
    const std::string bytes = io::encode_checkpoint(c);
    CHECK(bytes.substr(0, 4) == "CKP1");
    const auto back = io::decode_checkpoint(bytes);
    CHECK(back == c);
    CHECK(io::encode_checkpoint(back) == bytes);

    // Identical predictions after reloading.
    const train::Model a(c), b(back);
    const Eigen::MatrixXd x = Eigen::RowVectorXd::LinSpaced(7, 0.0, 0.9);
    CHECK(a.predict(a.latent(0.3, 1.1), x) == b.predict(b.latent(0.3, 1.1), x));
  }
}

TEST_CASE("CKP1 rejects mismatched layouts") {
  auto c = sample_checkpoint(false);
  std::string bytes = io::encode_checkpoint(c);
  CHECK_THROWS_AS(io::decode_checkpoint(bytes.substr(0, bytes.size() - 1)), FormatError);
  const auto pos = bytes.find("\"width\":5");
  REQUIRE(pos != std::string::npos);
  bytes[pos + 8] = '6';
  CHECK_THROWS_AS(io::decode_checkpoint(bytes), FormatError);
}

TEST_CASE("datasets and csv") {
  const auto snap = sample_snapshot();
  pde::SnapshotSet set;
  set.problem = snap.problem;
  set.grid = snap.grid;
  set.fields = snap.fields;
  set.times = snap.trajectory.times;
  set.trajectories = {snap.trajectory, snap.trajectory};
  set.trajectories[1].mu = 0.2;
  const fs::path dir = scratch_dir("set");
  io::write_dataset(dir, set);
  CHECK(io::read_dataset(dir) == set);

  io::Csv csv({"a", "b"});
  csv.row({"1", io::format_double(0.1)}).row({"x", io::format_double(1e-300)});
  CHECK(csv.str() == "a,b\n1,0.1\nx,1e-300\n");
  CHECK_THROWS_AS(csv.row({"only one"}), InvalidInput);
  csv.write(dir / "t.csv");
  const auto rows = io::read_csv(dir / "t.csv");
  CHECK(rows.size() == 3);
  CHECK(rows[2][1] == "1e-300");
  for (double v : {0.1, 1.0 / 3.0, -2.5e-310, 6.02e23}) {
    const std::string text = io::format_double(v);
    double back = 0.0;
    std::from_chars(text.data(), text.data() + text.size(), back);
    CHECK(back == v);
  }
}
