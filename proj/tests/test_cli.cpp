#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rpb/cli.hpp"
#include "rpb/data.hpp"
#include "rpb/hypotheses.hpp"
#include "rpb/recursion.hpp"

using namespace rpb;

namespace {

const std::filesystem::path kDir = "rpb-cli-test-scratch";

struct Scratch {
  Scratch() { std::filesystem::create_directories(kDir); }
  ~Scratch() { std::filesystem::remove_all(kDir); }
};

std::string write_config(const std::string& name, const nlohmann::json& j) {
  const std::string path = (kDir / name).string();
  std::ofstream f(path);
  f << j.dump(2) << '\n';
  return path;
}

std::string write_text(const std::string& name, const std::string& text) {
  const std::string path = (kDir / name).string();
  std::ofstream f(path);
  f << text;
  return path;
}

std::string read_file(const std::string& path) {
  std::ifstream f(path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

struct Captured {
  int code = -1;
  std::string out;
  std::string err;
};

template <typename Fn>
Captured capture(Fn&& fn) {
  std::ostringstream out, err;
  Captured c;
  c.code = fn(out, err);
  c.out = out.str();
  c.err = err.str();
  return c;
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    if (ch == '\n') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::vector<std::string> cells(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

nlohmann::json base_run_config() {
  return {{"method", "rpb"},    {"dataset", "synthetic"},
          {"n", 300},           {"theta_star", 0.5},
          {"eta", 0.1},         {"model", "finite"},
          {"grid_size", 21},    {"mode", "exact"},
          {"steps", 3},         {"gamma", 0.5},
          {"delta", 0.025},     {"epochs", 40},
          {"learning_rate", 1.0}, {"seed", 1}};
}

}  // namespace

TEST_CASE("split prints the published chunk sizes") {
  Scratch s;
  const Captured c = capture([](std::ostream& out, std::ostream& err) {
    return cmd_split(60000, 4, out, err);
  });
  CHECK(c.code == kExitSuccess);
  CHECK(c.out == "7500,7500,15000,30000\n");
  CHECK(c.err.empty());

  const Captured c8 = capture([](std::ostream& out, std::ostream& err) {
    return cmd_split(60000, 8, out, err);
  });
  CHECK(c8.out == "469,469,937,1875,3750,7500,15000,30000\n");

  const Captured bad = capture([](std::ostream& out, std::ostream& err) {
    return cmd_split(16, 6, out, err);
  });
  CHECK(bad.code == kExitConfig);
  CHECK(bad.out.empty());
  CHECK(!bad.err.empty());
}

TEST_CASE("malformed configs exit with the config code") {
  Scratch s;
  const auto run = [](const std::string& path) {
    return capture([&](std::ostream& out, std::ostream& err) {
      return cmd_run(path, out, err);
    });
  };

  CHECK(run((kDir / "missing.json").string()).code == kExitConfig);
  CHECK(run(write_text("broken.json", "{nope")).code == kExitConfig);

  auto unknown = base_run_config();
  unknown["frobnicate"] = 3;
  const Captured cu = run(write_config("unknown.json", unknown));
  CHECK(cu.code == kExitConfig);
  CHECK(cu.err.find("frobnicate") != std::string::npos);

  auto bad_type = base_run_config();
  bad_type["n"] = "many";
  CHECK(run(write_config("bad_type.json", bad_type)).code == kExitConfig);

  auto mixed = base_run_config();
  mixed["train_images"] = "x.gz";  // synthetic dataset forbids idx paths
  CHECK(run(write_config("mixed.json", mixed)).code == kExitConfig);

  auto finite_hidden = base_run_config();
  finite_hidden["hidden"] = {16};  // finite model has no network settings
  CHECK(run(write_config("fh.json", finite_hidden)).code == kExitConfig);

  auto exact_net = base_run_config();
  exact_net["model"] = "network";
  exact_net.erase("grid_size");
  exact_net["mode"] = "exact";  // enumeration needs the finite backend
  CHECK(run(write_config("en.json", exact_net)).code == kExitConfig);

  auto bad_gamma = base_run_config();
  bad_gamma["gamma"] = 1.0;
  CHECK(run(write_config("bg.json", bad_gamma)).code == kExitConfig);

  auto seeds_in_run = base_run_config();
  seeds_in_run["seeds"] = {1, 2};  // compare-only key
  CHECK(run(write_config("sr.json", seeds_in_run)).code == kExitConfig);

  auto method_in_compare = base_run_config();
  const std::string mc = write_config("mc.json", method_in_compare);
  const Captured cc = capture([&](std::ostream& out, std::ostream& err) {
    return cmd_compare(mc, out, err);
  });
  CHECK(cc.code == kExitConfig);
}

TEST_CASE("missing data files exit with the runtime code") {
  Scratch s;
  nlohmann::json cfg = {{"method", "uninformed"},
                        {"dataset", "idx"},
                        {"train_images", "no-such-images.gz"},
                        {"train_labels", "no-such-labels.gz"},
                        {"model", "network"},
                        {"hidden", {4}},
                        {"epochs", 1},
                        {"seed", 1}};
  const std::string path = write_config("noidx.json", cfg);
  const Captured c = capture([&](std::ostream& out, std::ostream& err) {
    return cmd_run(path, out, err);
  });
  CHECK(c.code == kExitRuntime);
  CHECK(!c.err.empty());

  // A split too deep for the sample is also caught at runtime.
  auto deep = base_run_config();
  deep["n"] = 4;
  deep["steps"] = 4;
  const Captured cd = capture([&](std::ostream& out, std::ostream& err) {
    return cmd_run(write_config("deep.json", deep), out, err);
  });
  CHECK(cd.code == kExitRuntime);
}

TEST_CASE("run emits a re-validated trace with reproducible bytes and files") {
  Scratch s;
  auto cfg = base_run_config();
  cfg["test_n"] = 200;
  cfg["output_csv"] = (kDir / "trace.csv").string();
  cfg["output_json"] = (kDir / "trace.json").string();
  cfg["checkpoint"] = (kDir / "chain.json").string();
  const std::string path = write_config("run.json", cfg);

  const Captured c = capture([&](std::ostream& out, std::ostream& err) {
    return cmd_run(path, out, err);
  });
  REQUIRE(c.code == kExitSuccess);

  const auto rows = lines(c.out);
  REQUIRE(rows.size() == 4);  // header + one row per step
  CHECK(rows[0] == "t,n_val,F_hat,KL_over_nval,E_t,B_t,test01");
  CHECK(cells(rows[1])[0] == "1");
  CHECK(cells(rows[3])[0] == "3");
  // n_val follows the geometric suffixes of n = 300: 300, 225, 150.
  CHECK(cells(rows[1])[1] == "300");
  CHECK(cells(rows[2])[1] == "225");
  CHECK(cells(rows[3])[1] == "150");
  // With test data configured the last column is filled.
  CHECK(!cells(rows[3])[6].empty());

  // Byte-identical rerun.
  const Captured again = capture([&](std::ostream& out, std::ostream& err) {
    return cmd_run(path, out, err);
  });
  CHECK(again.code == kExitSuccess);
  CHECK(again.out == c.out);

  // The CSV file carries exactly the stdout table.
  CHECK(read_file(cfg["output_csv"]) == c.out);

  // The JSON document pairs the trace with its configuration metadata.
  const nlohmann::json doc =
      nlohmann::json::parse(read_file(cfg["output_json"]));
  CHECK(doc.at("meta").at("method") == "rpb");
  CHECK(doc.at("meta").at("seed") == 1);
  CHECK(doc.at("trace").size() == 3);
  CHECK(doc.at("trace")[2].at("bound").is_number());

  // The checkpoint holds the full chain and enough settings to recompute
  // the trace from scratch; doing so here must reproduce the emitted bound.
  const nlohmann::json ck =
      nlohmann::json::parse(read_file(cfg["checkpoint"]));
  CHECK(ck.at("kind") == "recursive-chain");
  REQUIRE(ck.at("distributions").size() == 4);
  REQUIRE(ck.at("gammas").size() == 2);

  std::vector<HypothesisDistribution> chain;
  for (const auto& dj : ck.at("distributions")) {
    chain.push_back(distribution_from_json(dj));
  }
  RecursionConfig rc;
  rc.steps = ck.at("steps").get<std::size_t>();
  rc.gammas = ck.at("config_gammas").get<std::vector<double>>();
  rc.gamma_grid = ck.at("gamma_grid").get<std::vector<double>>();
  rc.mode = ck.at("mode") == "exact" ? EstimationMode::exact
                                     : EstimationMode::sampled;
  rc.delta = ck.at("delta").get<double>();
  rc.delta_prime = ck.at("delta_prime").get<double>();
  rc.seed = ck.at("seed").get<std::uint64_t>();

  const Dataset data = gen_threshold_data(ThresholdTask{0.5, 0.1}, 300, 1);
  const BoundTrace trace = evaluate_chain(
      chain, ck.at("gammas").get<std::vector<double>>(), data, rc);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", trace.final_bound());
  CHECK(cells(rows[3])[5] == buf);
}

TEST_CASE("run covers every baseline method with checkpoints") {
  Scratch s;
  for (const char* name : {"uninformed", "informed", "informed-excess"}) {
    const std::string method = name;
    auto cfg = base_run_config();
    cfg["method"] = method;
    cfg.erase("steps");
    cfg.erase("gamma");
    cfg["checkpoint"] = (kDir / (method + ".json")).string();
    const std::string path = write_config("run-" + method + ".json", cfg);

    const Captured c = capture([&](std::ostream& out, std::ostream& err) {
      return cmd_run(path, out, err);
    });
    REQUIRE(c.code == kExitSuccess);
    const auto rows = lines(c.out);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0] == "method,train01,test01,bound");
    CHECK(cells(rows[1])[0] == method);
    CHECK(!cells(rows[1])[3].empty());

    const nlohmann::json ck =
        nlohmann::json::parse(read_file(cfg["checkpoint"]));
    CHECK(ck.at("kind") == "baseline-chain");
    CHECK(ck.at("method") == method);
    CHECK(ck.at("distributions").size() == 2);
    CHECK(ck.contains("reference") == (method == "informed-excess"));
  }
}

TEST_CASE("compare prints one row per method and matches single runs") {
  Scratch s;
  auto cfg = base_run_config();
  cfg.erase("method");
  cfg["steps"] = 2;
  const std::string path = write_config("compare.json", cfg);

  const Captured c = capture([&](std::ostream& out, std::ostream& err) {
    return cmd_compare(path, out, err);
  });
  REQUIRE(c.code == kExitSuccess);
  const auto rows = lines(c.out);
  REQUIRE(rows.size() == 5);
  CHECK(rows[0] == "method,train01,test01,bound");
  CHECK(cells(rows[1])[0] == "rpb");
  CHECK(cells(rows[2])[0] == "uninformed");
  CHECK(cells(rows[3])[0] == "informed");
  CHECK(cells(rows[4])[0] == "informed-excess");

  // The table's rpb bound equals the final B_T of a standalone run with the
  // same configuration and seed.
  auto run_cfg = cfg;
  run_cfg["method"] = "rpb";
  const Captured r = capture([&](std::ostream& out, std::ostream& err) {
    return cmd_run(write_config("compare-run.json", run_cfg), out, err);
  });
  REQUIRE(r.code == kExitSuccess);
  const auto run_rows = lines(r.out);
  CHECK(cells(rows[1])[3] == cells(run_rows.back())[5]);

  // And the uninformed row matches its standalone report.
  run_cfg["method"] = "uninformed";
  run_cfg.erase("steps");
  run_cfg.erase("gamma");
  const Captured u = capture([&](std::ostream& out, std::ostream& err) {
    return cmd_run(write_config("compare-run-u.json", run_cfg), out, err);
  });
  REQUIRE(u.code == kExitSuccess);
  CHECK(cells(rows[2])[3] == cells(lines(u.out)[1])[3]);
}

TEST_CASE("compare aggregates mean and deviation across seeds") {
  Scratch s;
  auto cfg = base_run_config();
  cfg.erase("method");
  cfg.erase("seed");
  cfg["steps"] = 2;
  cfg["n"] = 200;
  cfg["epochs"] = 20;
  cfg["seeds"] = {1, 2, 3};
  cfg["output_json"] = (kDir / "compare.json.out").string();
  const std::string path = write_config("compare-multi.json", cfg);

  const Captured c = capture([&](std::ostream& out, std::ostream& err) {
    return cmd_compare(path, out, err);
  });
  REQUIRE(c.code == kExitSuccess);
  const auto rows = lines(c.out);
  REQUIRE(rows.size() == 5);
  CHECK(rows[0] ==
        "method,train01_mean,train01_std,test01_mean,test01_std,"
        "bound_mean,bound_std");
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto cs = cells(rows[i]);
    REQUIRE(cs.size() == 7);
    CHECK(!cs[1].empty());  // train01 mean
    CHECK(!cs[2].empty());  // train01 std over three seeds
    CHECK(!cs[5].empty());  // bound mean
    CHECK(!cs[6].empty());  // bound std
  }

  const nlohmann::json doc =
      nlohmann::json::parse(read_file(cfg["output_json"]));
  REQUIRE(doc.at("rows").size() == 4);
  CHECK(doc.at("rows")[0].at("bound").size() == 3);  // per-seed values
}

TEST_CASE("validate runs a coverage harness and writes its summary") {
  Scratch s;
  nlohmann::json cfg = {{"harness", "split-kl"}, {"trials", 200},
                        {"n", 100},              {"delta", 0.05},
                        {"seed", 1},             {"threads", 2}};
  cfg["output_csv"] = (kDir / "cov.csv").string();
  const std::string path = write_config("validate.json", cfg);

  const Captured c = capture([&](std::ostream& out, std::ostream& err) {
    return cmd_validate(path, out, err);
  });
  REQUIRE(c.code == kExitSuccess);
  const auto rows = lines(c.out);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0] == "harness,trials,violations,coverage,target_level,passed");
  CHECK(cells(rows[1])[0] == "split-kl");
  CHECK(cells(rows[1])[1] == "200");
  CHECK(read_file(cfg["output_csv"]) == c.out);

  nlohmann::json bad = cfg;
  bad["harness"] = "mystery";
  const Captured cb = capture([&](std::ostream& out, std::ostream& err) {
    return cmd_validate(write_config("validate-bad.json", bad), out, err);
  });
  CHECK(cb.code == kExitConfig);

  nlohmann::json badprobs = cfg;
  badprobs["probs"] = {0.5, 0.5};  // four support points need four weights
  const Captured cp = capture([&](std::ostream& out, std::ostream& err) {
    return cmd_validate(write_config("validate-probs.json", badprobs), out,
                        err);
  });
  CHECK(cp.code == kExitConfig);
}
