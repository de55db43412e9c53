#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>

#include "sphl/io.hpp"
#include "sphl/runner.hpp"

using namespace sphl;
namespace fs = std::filesystem;

namespace {

struct Result {
  int status{-1};
  std::string err;
};

fs::path work_dir() {
  static const fs::path dir = [] {
    auto p = fs::temp_directory_path() / ("sphl_cli_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return dir;
}

Result run(const std::string& args) {
  const auto err_path = (work_dir() / "stderr.txt").string();
  const std::string cmd = std::string(SPHL_CLI_PATH) + " " + args + " >/dev/null 2>" + err_path;
  const int rc = std::system(cmd.c_str());
  Result r;
  r.status = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  r.err = fs::exists(err_path) ? read_file(err_path) : "";
  return r;
}

std::string small_config(const std::string& name, const std::string& extra = "") {
  const auto path = (work_dir() / name).string();
  write_file_atomic(path,
                    "sim.rows = 16\nsim.cols = 16\nsim.open_cols = 4\nsim.ppp = 20\n"
                    "sim.sbr = 1\nsolver.max_iters = 5\n" + extra);
  return path;
}

std::size_t count_lines(const std::string& text) {
  std::size_t n = 0;
  for (char c : text) n += c == '\n';
  return n;
}

class CleanWorkDir : public ::testing::Environment {
 public:
  void TearDown() override { fs::remove_all(work_dir()); }
};

const auto* const kCleanup = ::testing::AddGlobalTestEnvironment(new CleanWorkDir);

}  // namespace

TEST(Cli, SimulateReconstructEvaluate) {
  const auto cfg = small_config("pipe.cfg");
  const auto sim = (work_dir() / "pipe_sim").string();
  const auto rec = (work_dir() / "pipe_rec").string();
  const auto ev = (work_dir() / "pipe_ev").string();
  ASSERT_EQ(run("simulate --config " + cfg + " --output " + sim + " --seed 3").status, 0);
  for (const char* f : {"cube.sphc", "sir.txt", "truth_depth.map", "truth_reflectivity.map",
                        "truth_mask.map", "config.txt"}) {
    EXPECT_TRUE(fs::exists(sim + "/" + f)) << f;
  }
  const auto cube = load_cube(sim + "/cube.sphc");
  EXPECT_EQ(cube.rows(), 16u);
  EXPECT_EQ(cube.bins(), 300u);
  // The written config reproduces the effective settings.
  EXPECT_EQ(load_config(sim + "/config.txt").sim.seed, 3u);

  ASSERT_EQ(run("reconstruct --config " + cfg + " --input " + sim + "/cube.sphc --output " + rec)
                .status,
            0);
  for (const char* f : {"depth.map", "reflectivity.map", "depth_uncertainty.map",
                        "reflectivity_uncertainty.map", "points.txt", "trace.csv"}) {
    EXPECT_TRUE(fs::exists(rec + "/" + f)) << f;
  }
  ASSERT_EQ(run("evaluate --input " + rec + " --truth " + sim + " --output " + ev +
                " --tau 1,10")
                .status,
            0);
  const auto csv = read_file(ev + "/metrics.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "algorithm,wavelength,tau,dae_bins,dae_m,iae,pd,false_detections,iae_detection,"
            "runtime_s");
  EXPECT_EQ(count_lines(csv), 3u);
  // Proposed method on a moderate-flux scene: most target pixels within 10 bins.
  const auto second = csv.substr(csv.find('\n') + 1);
  const auto row = detail::split(second.substr(second.find('\n') + 1), ',');
  ASSERT_GE(row.size(), 7u);
  EXPECT_EQ(row[2], "10");
  EXPECT_GT(std::stod(row[6]), 0.9);
}

TEST(Cli, ReconstructIsByteIdenticalAcrossRunsAndThreads) {
  const auto cfg = small_config("det.cfg");
  const auto sim = (work_dir() / "det_sim").string();
  ASSERT_EQ(run("simulate --config " + cfg + " --output " + sim).status, 0);
  const auto a = (work_dir() / "det_a").string(), b = (work_dir() / "det_b").string();
  const auto c = (work_dir() / "det_c").string();
  const auto base = "reconstruct --config " + cfg + " --input " + sim + "/cube.sphc --output ";
  ASSERT_EQ(run(base + a).status, 0);
  ASSERT_EQ(run(base + b).status, 0);
  ASSERT_EQ(run(base + c + " --threads 4").status, 0);
  for (const char* f : {"depth.map", "reflectivity.map", "depth_uncertainty.map",
                        "reflectivity_uncertainty.map", "points.txt", "trace.csv"}) {
    EXPECT_EQ(read_file(a + "/" + f), read_file(b + "/" + f)) << f;
    EXPECT_EQ(read_file(a + "/" + f), read_file(c + "/" + f)) << f;
  }
}

TEST(Cli, SweepCountsRowsAndResumes) {
  const auto cfg = small_config("sweep.cfg");
  const auto out = (work_dir() / "sweep").string();
  const auto args = "sweep --config " + cfg + " --output " + out +
                    " --algorithm xcorr,class --sbr 0.5,2 --ppp 5,20";
  ASSERT_EQ(run(args).status, 0);
  const auto csv = read_file(out + "/sweep.csv");
  EXPECT_EQ(count_lines(csv), 1u + 4u * 2u);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "algorithm,sbr,ppp,background,seed,dae_bins,dae_m,iae,tau,pd,false_detections,"
            "iae_detection,runtime_s");
  std::size_t cells = 0;
  for (const auto& e : fs::directory_iterator(out + "/cells")) cells += e.is_regular_file();
  EXPECT_EQ(cells, 8u);

  // A second run skips every cell; a planted row proves nothing was recomputed.
  const auto planted = out + "/cells/" +
                       SweepCell{Algorithm::class_, 2.0, 20.0, BackgroundShape{}, 1}.key() +
                       ".csv";
  ASSERT_TRUE(fs::exists(planted));
  write_file_atomic(planted, "planted\n");
  ASSERT_EQ(run(args).status, 0);
  EXPECT_NE(read_file(out + "/sweep.csv").find("planted\n"), std::string::npos);
}

TEST(Cli, ErrorsAreOneMachineReadableLine) {
  const auto bad_cfg = (work_dir() / "bad.cfg").string();
  write_file_atomic(bad_cfg, "sim.rows = 16\nnot_a_key = 1\n");
  auto r = run("simulate --config " + bad_cfg + " --output " + (work_dir() / "x").string());
  EXPECT_EQ(r.status, 1);
  EXPECT_EQ(r.err.rfind("error: invalid_config: ", 0), 0u) << r.err;
  EXPECT_EQ(count_lines(r.err), 1u);

  r = run("reconstruct --input /nonexistent.sphc --output " + (work_dir() / "y").string());
  EXPECT_EQ(r.status, 1);
  EXPECT_EQ(r.err.rfind("error: load_error: ", 0), 0u) << r.err;

  const auto junk = (work_dir() / "junk.sphc").string();
  write_file_atomic(junk, std::string(64, 'j'));
  r = run("reconstruct --input " + junk + " --output " + (work_dir() / "z").string());
  EXPECT_EQ(r.status, 1);
  EXPECT_EQ(r.err, "error: load_error: bad magic\n");

  r = run("simulate --output " + (work_dir() / "w").string() + " --background gamma:2");
  EXPECT_EQ(r.status, 1);
  EXPECT_EQ(r.err.rfind("error: invalid_config: ", 0), 0u) << r.err;

  r = run("reconstruct --output x");
  EXPECT_EQ(r.status, 2);
  EXPECT_EQ(r.err.rfind("error: usage: ", 0), 0u) << r.err;
  EXPECT_EQ(run("frobnicate").status, 2);
}
