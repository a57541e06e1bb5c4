#include <cstdlib>
#include <fstream>
#include <iterator>
#include <sstream>

#include "doctest.h"
#include "support.hpp"
#include "vdnapr/cli.hpp"
#include "vdnapr/vdna.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "vdnapr");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = vdnapr::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool same_tree(const fs::path& a, const fs::path& b) {
  std::vector<fs::path> fa, fb;
  for (const auto& e : fs::recursive_directory_iterator(a)) fa.push_back(fs::relative(e.path(), a));
  for (const auto& e : fs::recursive_directory_iterator(b)) fb.push_back(fs::relative(e.path(), b));
  std::sort(fa.begin(), fa.end());
  std::sort(fb.begin(), fb.end());
  if (fa != fb) return false;
  for (const auto& f : fa)
    if (fs::is_regular_file(a / f) && slurp(a / f) != slurp(b / f)) return false;
  return true;
}

std::vector<std::string> tiny_world(const fs::path& dir) {
  return {"synth", "--seed", "7", "--out", dir.string(), "--places", "20", "--layers", "2", "--neurons", "3", "--samples", "8"};
}

}  // namespace

TEST_CASE("synth is deterministic") {
  const auto dir = testing::scratch_dir("cli_synth");
  REQUIRE(run(tiny_world(dir / "a")).code == 0);
  REQUIRE(run(tiny_world(dir / "b")).code == 0);
  CHECK(same_tree(dir / "a", dir / "b"));
  CHECK(fs::exists(dir / "a" / "metadata.txt"));
  CHECK(slurp(dir / "a" / "metadata.txt").find("seed 7") != std::string::npos);
}

TEST_CASE("usage and domain errors") {
  auto r = run({"synth", "--seed", "1", "--bogus"});
  CHECK(r.code == 2);
  r = run({"synth", "--out", "x"});
  CHECK(r.code != 0);
  CHECK(r.err.find("--seed") != std::string::npos);
  r = run({"emd", "/nonexistent/a.vdna", "/nonexistent/b.vdna"});
  CHECK(r.code == 2);

  const auto dir = testing::scratch_dir("cli_errors");
  const auto s1 = testing::uniform_spec(1, 2, 4), s2 = testing::uniform_spec(1, 2, 5);
  vdnapr::vdna::Vdna(s1).save(dir / "a.vdna");
  vdnapr::vdna::Vdna(s2).save(dir / "b.vdna");
  r = run({"emd", (dir / "a.vdna").string(), (dir / "b.vdna").string()});
  CHECK(r.code == 1);
  CHECK(r.err.rfind("error: SpecMismatch:", 0) == 0);
  std::ofstream(dir / "bad.vdna") << "not a vdna";
  r = run({"emd", (dir / "bad.vdna").string(), (dir / "a.vdna").string()});
  CHECK(r.code == 1);
  CHECK(r.err.rfind("error: FormatError:", 0) == 0);
}

TEST_CASE("pipeline and emd through the command line") {
  const auto dir = testing::scratch_dir("cli_pipeline");
  const auto d = [&](const char* name) { return (dir / name).string(); };
  REQUIRE(run(tiny_world(dir / "w")).code == 0);
  auto r = run({"calibrate", "--activations", d("w/activations.vact"), "--bins", "16", "--out", d("spec.txt")});
  REQUIRE(r.code == 0);
  r = run({"accumulate", "--spec", d("spec.txt"), "--manifest", d("w/manifest.txt"), "--activations",
           d("w/activations.vact"), "--seq-len", "3", "--out", d("vd")});
  REQUIRE(r.code == 0);
  r = run({"train", "--spec", d("spec.txt"), "--vdnas", d("vd"), "--seed", "2", "--out", d("tr"), "--config", "compact",
           "--epochs", "1", "--refresh-period", "8", "--negatives", "2", "--train-range", "0:14", "--val-range", "0:20"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(fs::exists(dir / "tr" / "checkpoint.vprw"));
  CHECK(fs::exists(dir / "tr" / "last.vprw"));
  CHECK(slurp(dir / "tr" / "training_log.txt").rfind("# vdnapr training log v1", 0) == 0);
  r = run({"encode", "--spec", d("spec.txt"), "--checkpoint", d("tr/checkpoint.vprw"), "--vdnas", d("vd"), "--out", d("all.vpdb")});
  REQUIRE(r.code == 0);
  REQUIRE(run({"index", "--db", d("all.vpdb"), "--traversal", "t0", "--out", d("db.vpdb")}).code == 0);
  REQUIRE(run({"index", "--db", d("all.vpdb"), "--traversal", "t1", "--out", d("q.vpdb")}).code == 0);
  r = run({"eval", "--db", d("db.vpdb"), "--queries", d("q.vpdb"), "--out", d("report.txt")});
  REQUIRE(r.code == 0);
  const auto report = slurp(dir / "report.txt");
  CHECK(report.rfind("# vdnapr eval report v1\n", 0) == 0);
  CHECK(report.find("R@1 ") != std::string::npos);
  r = run({"eval", "--db", d("db.vpdb"), "--queries", d("q.vpdb"), "--sweep", "--spec", d("spec.txt"), "--range", "1:2"});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("L1-2") != std::string::npos);

  fs::path first;
  for (const auto& e : fs::directory_iterator(dir / "vd"))
    if (e.path().extension() == ".vdna") {
      first = e.path();
      break;
    }
  REQUIRE_FALSE(first.empty());
  r = run({"emd", first.string(), first.string()});
  CHECK(r.code == 0);
  CHECK(r.out == "0.0\n");
}

TEST_CASE("relative outputs honour the output root") {
  const auto dir = testing::scratch_dir("cli_root");
  ::setenv("VDNAPR_OUT_ROOT", dir.string().c_str(), 1);
  const auto r = run({"synth", "--seed", "1", "--out", "rel", "--places", "3", "--layers", "1", "--neurons", "1", "--samples", "2"});
  ::unsetenv("VDNAPR_OUT_ROOT");
  CHECK(r.code == 0);
  CHECK(fs::exists(dir / "rel" / "manifest.txt"));
}
