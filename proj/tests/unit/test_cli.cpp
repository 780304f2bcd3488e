#include <doctest.h>

#include <sstream>

#include "cli.hpp"
#include "polyrad/datamodel.hpp"
#include "support.hpp"

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = polyrad::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::size_t lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_CASE("synth then eval linear succeeds end to end") {
  testing::TempDir dir;
  const std::string d = (dir / "d").string();
  auto s = cli({"synth", "--count", "10", "--out", d});
  REQUIRE(s.code == 0);
  CHECK(polyrad::read_manifest(d).size() == 10);

  auto e = cli({"eval", "--method", "linear", "--data", d});
  CHECK(e.code == 0);
  CHECK(e.out.rfind("method,cap_m,scenes,mae,rmse,unit\n", 0) == 0);
  CHECK(lines(e.out) == 4);  // header + caps 50, 70, 80
  CHECK(e.out.find(",mm") != std::string::npos);

  auto multi = cli({"eval", "--method", "median", "--method", "poly-dense:4", "--caps", "80", "--unit", "m",
                    "--split", "test", "--data", d, "--per-scene", (dir / "scenes.csv").string()});
  CHECK(multi.code == 0);
  CHECK(lines(multi.out) == 3);
  CHECK(lines(testing::slurp(dir / "scenes.csv")) == 11);
}

TEST_CASE("seed flag and config file") {
  testing::TempDir dir;
  testing::spit(dir / "scene.cfg", "height = 16\nwidth = 16\nradar_points = 12\nseed = 5\n");
  const std::string cfg = (dir / "scene.cfg").string();
  REQUIRE(cli({"synth", "--config", cfg, "--count", "2", "--out", (dir / "a").string()}).code == 0);
  REQUIRE(cli({"synth", "--config", cfg, "--count", "2", "--out", (dir / "b").string()}).code == 0);
  REQUIRE(cli({"synth", "--config", cfg, "--count", "2", "--seed", "6", "--out", (dir / "c").string()}).code == 0);
  const auto za = testing::slurp(dir / "a" / "s0001.z.prad");
  CHECK(za.rfind("PRAD1 16 16 scaleless\n", 0) == 0);
  CHECK(za == testing::slurp(dir / "b" / "s0001.z.prad"));
  CHECK(za != testing::slurp(dir / "c" / "s0001.z.prad"));
  CHECK(lines(testing::slurp(dir / "a" / "s0000.pts.csv")) == 13);
}

TEST_CASE("usage errors exit 1") {
  auto unknown_flag = cli({"eval", "--bogus"});
  CHECK(unknown_flag.code == 1);
  CHECK(unknown_flag.err.find("Usage") != std::string::npos);
  CHECK(cli({"frobnicate"}).code == 1);
  CHECK(cli({}).code == 1);
  CHECK(cli({"synth", "--out", "x", "--set", "novalue"}).code == 1);
  CHECK(cli({"inspect"}).code == 1);
  CHECK(cli({"eval", "--data", ".", "--method", "cubic"}).code == 1);
}

TEST_CASE("data errors exit 2") {
  testing::TempDir dir;
  CHECK(cli({"eval", "--data", (dir / "missing").string()}).code == 2);
  polyrad::write_manifest(dir.path(), std::vector<std::string>{"s0000"});
  auto r = cli({"eval", "--data", dir.path().string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("s0000") != std::string::npos);
}

TEST_CASE("gradcheck exits 0 when every check passes") {
  auto r = cli({"gradcheck"});
  CHECK(r.code == 0);
  CHECK(r.out.find("FAIL") == std::string::npos);
  CHECK(r.out.find("max relative error") != std::string::npos);
  CHECK(r.out.find("head2.weight") != std::string::npos);
}

TEST_CASE("inspect emits a 512-point grid and the inflection roots") {
  testing::TempDir dir;
  auto r = cli({"inspect", "--coeffs", "0,0,-1,0,1", "--out", (dir / "grid.csv").string(), "--roots",
                (dir / "roots.csv").string()});
  REQUIRE(r.code == 0);
  const auto grid = testing::slurp(dir / "grid.csv");
  CHECK(grid.rfind("z,depth,slope\n", 0) == 0);
  CHECK(lines(grid) == 513);
  const auto roots = testing::slurp(dir / "roots.csv");
  CHECK(lines(roots) == 2);
  CHECK(roots.find("0.408248") != std::string::npos);

  auto stdout_only = cli({"inspect", "--coeffs", "1,2", "--points", "3"});
  CHECK(stdout_only.code == 0);
  CHECK(stdout_only.out == "z,depth,slope\n0,1,2\n0.5,2,2\n1,3,2\n\nz,direction\n");
}

TEST_CASE("fit writes one coefficient row per scene") {
  testing::TempDir dir;
  const std::string d = (dir / "d").string();
  REQUIRE(cli({"synth", "--count", "4", "--out", d}).code == 0);
  auto r = cli({"fit", "--data", d, "--method", "poly-dense:3"});
  CHECK(r.code == 0);
  CHECK(r.out.rfind("scene,z_max,c0,c1,c2,c3\n", 0) == 0);
  CHECK(lines(r.out) == 5);
  CHECK(cli({"fit", "--data", d, "--method", "poly-sparse:200"}).code == 2);
}

TEST_CASE("train, evaluate and inspect a checkpoint") {
  testing::TempDir dir;
  const std::string d = (dir / "d").string();
  REQUIRE(cli({"synth", "--count", "6", "--out", d, "--set", "height=16", "--set", "width=16"}).code == 0);
  const std::string ckpt = (dir / "m.ckpt").string();
  const std::vector<std::string> train_args{"train", "--data", d, "--out", ckpt, "--epochs", "2", "--degree", "3",
                                            "--quiet", "--set", "c_r=4", "--set", "c_z=4", "--set", "c_v=4",
                                            "--set", "c_s=4", "--log", (dir / "log.csv").string()};
  auto t = cli(train_args);
  REQUIRE(t.code == 0);
  CHECK(lines(testing::slurp(dir / "log.csv")) == 3);
  const std::string first = testing::slurp(ckpt);
  REQUIRE(cli(train_args).code == 0);
  CHECK(testing::slurp(ckpt) == first);

  auto e = cli({"eval", "--data", d, "--method", "network", "--checkpoint", ckpt, "--split", "test"});
  CHECK(e.code == 0);
  CHECK(e.out.find("network,") != std::string::npos);
  CHECK(cli({"eval", "--data", d, "--method", "network"}).code == 1);

  auto i = cli({"inspect", "--checkpoint", ckpt, "--data", d, "--scene", "s0001"});
  CHECK(i.code == 0);
  CHECK(i.out.find("z,direction") != std::string::npos);
  CHECK(cli({"inspect", "--checkpoint", ckpt, "--data", d, "--scene", "nope"}).code == 2);
}
