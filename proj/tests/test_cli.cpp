#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "dsn/experiment.hpp"
#include "dsn/image_io.hpp"

using namespace dsn;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) : path(fs::temp_directory_path() / ("dsnlab_" + tag)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name, const std::string& content) const {
    std::string p = (path / name).string();
    std::ofstream f(p, std::ios::trunc);
    f << content;
    return p;
  }
  std::string sub(const std::string& name) const { return (path / name).string(); }
};

const char* kTinyBlobs =
    "scenario = blobs2d\n"
    "variant = dsn\n"
    "similarity = mmd\n"
    "steps = 60\n"
    "warmup_steps = 20\n"
    "batch_size = 8\n"
    "train_per_domain = 120\n"
    "eval_per_domain = 60\n"
    "eval_interval = 30\n"
    "seed = 5\n";

}  // namespace

TEST_CASE("config parsing and validation") {
  SUBCASE("defaults fill in") {
    ExperimentConfig c = ExperimentConfig::parse_text("scenario=glyph16\nvariant=dsn\n");
    CHECK(c.scenario == Scenario::glyph16);
    CHECK(c.similarity == Similarity::dann);
    CHECK(c.alpha == 0.05);
    CHECK(c.gamma == 0.25);
    CHECK(c.warmup_steps == 500);
    CHECK(c.lr == 0.01);
    CHECK(c.batch_size == 32);
    CHECK(c.output_dir == "out");
  }
  SUBCASE("comments and blank lines are fine") {
    ExperimentConfig c = ExperimentConfig::parse_text("# a comment\n\nscenario=blobs2d\nvariant=source_only\n");
    CHECK(c.scenario == Scenario::blobs2d);
  }
  SUBCASE("unknown keys are rejected by name") {
    CHECK_THROWS_WITH_AS((void)ExperimentConfig::parse_text("scenario=glyph16\nvariant=dsn\nbogus=1\n"),
                         doctest::Contains("bogus"), ConfigError);
  }
  SUBCASE("missing required keys are named") {
    CHECK_THROWS_WITH_AS((void)ExperimentConfig::parse_text("variant=dsn\n"), doctest::Contains("scenario"),
                         ConfigError);
    CHECK_THROWS_WITH_AS((void)ExperimentConfig::parse_text("scenario=glyph16\n"), doctest::Contains("variant"),
                         ConfigError);
  }
  SUBCASE("rejects bad values") {
    CHECK_THROWS_AS((void)ExperimentConfig::parse_text("scenario=mnist\nvariant=dsn\n"), ConfigError);
    CHECK_THROWS_AS((void)ExperimentConfig::parse_text("scenario=glyph16\nvariant=dsn\nlr=banana\n"), ConfigError);
    CHECK_THROWS_AS((void)ExperimentConfig::parse_text("scenario=glyph16\nvariant=dsn\nalpha=-1\n"), ConfigError);
    CHECK_THROWS_AS((void)ExperimentConfig::parse_text("scenario=glyph16\nvariant=dsn\nsteps=0\n"), ConfigError);
    CHECK_THROWS_AS((void)ExperimentConfig::parse_text("scenario=glyph16\nvariant=dsn\nscenario=blobs2d\n"),
                    ConfigError);
  }
  SUBCASE("similarity only applies to the dsn variant") {
    CHECK_THROWS_AS((void)ExperimentConfig::parse_text("scenario=glyph16\nvariant=source_only\nsimilarity=mmd\n"),
                    ConfigError);
    CHECK_THROWS_AS((void)ExperimentConfig::parse_text("scenario=glyph16\nvariant=dsn\nsimilarity=none\n"),
                    ConfigError);
  }
}

TEST_CASE("run ids are stable under key permutation and sensitive to content") {
  ExperimentConfig a = ExperimentConfig::parse_text("scenario=glyph16\nvariant=dsn\nseed=3\nalpha=0.1\n");
  ExperimentConfig b = ExperimentConfig::parse_text("alpha=0.1\nseed=3\nvariant=dsn\nscenario=glyph16\n");
  CHECK(a.run_id() == b.run_id());

  ExperimentConfig c = ExperimentConfig::parse_text("scenario=glyph16\nvariant=dsn\nseed=4\nalpha=0.1\n");
  CHECK(a.run_id() != c.run_id());

  // the output directory is a location, not an experiment parameter
  ExperimentConfig d = ExperimentConfig::parse_text("scenario=glyph16\nvariant=dsn\nseed=3\nalpha=0.1\noutput_dir=elsewhere\n");
  CHECK(a.run_id() == d.run_id());

  // explicit default similarity collides with the implied one
  ExperimentConfig e = ExperimentConfig::parse_text("scenario=glyph16\nvariant=dsn\nsimilarity=dann\nseed=3\nalpha=0.1\n");
  CHECK(a.run_id() == e.run_id());
}

TEST_CASE("cmd_run produces the full artifact set and deterministic bytes") {
  TempDir tmp("run");
  std::string cfg_path = tmp.file("exp.cfg", kTinyBlobs);

  RunOptions opts;
  opts.quiet = true;
  opts.out_override = tmp.sub("out_a");
  REQUIRE(cmd_run(cfg_path, opts) == 0);

  ExperimentConfig cfg = ExperimentConfig::parse_file(cfg_path);
  std::string dir_a = tmp.sub("out_a") + "/" + cfg.run_id();
  for (const char* f : {"metrics.csv", "ckpt.bin", "ckpt.index.txt", "summary.csv", "config.resolved.txt"})
    CHECK(fs::exists(dir_a + "/" + f));

  std::string header = slurp(dir_a + "/metrics.csv").substr(0, 62);
  CHECK(header == "step,lr,l_task,l_recon,l_diff,l_sim,src_acc,tgt_acc,angle_err\n");

  SUBCASE("a second run into a fresh directory is byte-identical") {
    opts.out_override = tmp.sub("out_b");
    REQUIRE(cmd_run(cfg_path, opts) == 0);
    std::string dir_b = tmp.sub("out_b") + "/" + cfg.run_id();
    CHECK(slurp(dir_a + "/metrics.csv") == slurp(dir_b + "/metrics.csv"));
    CHECK(slurp(dir_a + "/ckpt.bin") == slurp(dir_b + "/ckpt.bin"));
    CHECK(slurp(dir_a + "/summary.csv") == slurp(dir_b + "/summary.csv"));
  }
  SUBCASE("a completed run is skipped on digest match") {
    auto before = fs::last_write_time(dir_a + "/metrics.csv");
    REQUIRE(cmd_run(cfg_path, opts) == 0);
    CHECK(fs::last_write_time(dir_a + "/metrics.csv") == before);
  }
}

TEST_CASE("cmd_run maps config problems to exit code 2") {
  TempDir tmp("badrun");
  RunOptions opts;
  opts.quiet = true;
  CHECK(cmd_run(tmp.sub("missing.cfg"), opts) == 2);
  std::string bad = tmp.file("bad.cfg", "variant=dsn\n");
  CHECK(cmd_run(bad, opts) == 2);
}

TEST_CASE("table aggregates runs over seeds") {
  TempDir tmp("table");
  std::string cfg_path = tmp.file("exp.cfg", kTinyBlobs);
  RunOptions opts;
  opts.quiet = true;
  opts.out_override = tmp.sub("runs");
  REQUIRE(cmd_run(cfg_path, opts) == 0);
  for (uint64_t seed : {91ULL, 92ULL}) {
    opts.seed_override = seed;
    REQUIRE(cmd_run(cfg_path, opts) == 0);
  }
  REQUIRE(cmd_table(tmp.sub("runs"), true) == 0);
  std::string csv = slurp(tmp.sub("runs") + "/results_table.csv");
  CHECK(csv.find("blobs2d,dsn,mmd,3,") != std::string::npos);

  CHECK(cmd_table(tmp.sub("empty_dir"), true) == 2);
}

TEST_CASE("dump-recon writes grids for image scenarios and rejects blobs") {
  TempDir tmp("recon");
  RunOptions opts;
  opts.quiet = true;

  std::string blob_cfg = tmp.file("blob.cfg", kTinyBlobs);
  opts.out_override = tmp.sub("rb");
  CHECK(cmd_dump_recon(blob_cfg, opts, 4) == 2);

  std::string glyph_cfg = tmp.file("glyph.cfg",
                                   "scenario = glyph16\n"
                                   "variant = dsn\n"
                                   "similarity = mmd\n"
                                   "steps = 30\n"
                                   "warmup_steps = 10\n"
                                   "batch_size = 8\n"
                                   "train_per_domain = 80\n"
                                   "eval_per_domain = 40\n"
                                   "eval_interval = 15\n"
                                   "seed = 6\n");
  opts.out_override = tmp.sub("rg");
  // no checkpoint yet
  CHECK(cmd_dump_recon(glyph_cfg, opts, 4) == 2);
  REQUIRE(cmd_run(glyph_cfg, opts) == 0);
  REQUIRE(cmd_dump_recon(glyph_cfg, opts, 4) == 0);

  ExperimentConfig cfg = ExperimentConfig::parse_file(glyph_cfg);
  std::string dir = tmp.sub("rg") + "/" + cfg.run_id();
  ImageU8 grid = read_pnm(dir + "/recon_source.ppm");
  CHECK(grid.width == 4 * 16);
  CHECK(grid.height == 4 * 16);
  CHECK(grid.channels == 3);
  CHECK(fs::exists(dir + "/recon_target.ppm"));
  // asking for more rows than the eval set has is a config error
  CHECK(cmd_dump_recon(glyph_cfg, opts, 99) == 2);
}

TEST_CASE("gen-data dumps image datasets with a label index") {
  TempDir tmp("gendata");
  RunOptions opts;
  opts.quiet = true;
  std::string glyph_cfg = tmp.file("glyph.cfg",
                                   "scenario = glyph16\n"
                                   "variant = source_only\n"
                                   "train_per_domain = 20\n"
                                   "eval_per_domain = 10\n"
                                   "seed = 4\n");
  opts.out_override = tmp.sub("ds");
  REQUIRE(cmd_gen_data(glyph_cfg, opts) == 0);
  for (const char* domain : {"source", "target"}) {
    std::string dir = tmp.sub("ds") + "/" + domain;
    CHECK(fs::exists(dir + "/labels.txt"));
    int images = 0, lines = 0;
    for (const auto& e : fs::directory_iterator(dir))
      if (e.path().extension() == ".ppm") ++images;
    std::ifstream idx(dir + "/labels.txt");
    std::string line;
    while (std::getline(idx, line)) ++lines;
    CHECK(images == 30);
    CHECK(lines == 30);
    ImageU8 img = read_pnm(dir + "/img_00000.ppm");
    CHECK(img.width == 16);
    CHECK(img.height == 16);
  }

  std::string blob_cfg = tmp.file("blob.cfg", kTinyBlobs);
  CHECK(cmd_gen_data(blob_cfg, opts) == 2);
}

TEST_CASE("the installed binary honors the exit code contract") {
  if (!fs::exists("dsnlab")) return;  // only meaningful when run from the build tree
  TempDir tmp("exitcodes");
  std::string bad = tmp.file("bad.cfg", "variant=dsn\n");
  int rc = std::system(("./dsnlab run --config " + bad + " --quiet >/dev/null 2>&1").c_str());
  CHECK(WEXITSTATUS(rc) == 2);
  std::string good = tmp.file("good.cfg", kTinyBlobs);
  rc = std::system(("./dsnlab run --config " + good + " --out " + tmp.sub("o") + " --quiet >/dev/null 2>&1").c_str());
  CHECK(WEXITSTATUS(rc) == 0);
}
