#include "catch_amalgamated.hpp"

#include <fstream>
#include <sstream>

#include "maglattice/cli.hpp"

using namespace maglattice;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinRel;

namespace fs = std::filesystem;

namespace {

const fs::path kData = MAGLATTICE_DATA_DIR;

json minimal_config() {
  return json::parse(R"({
    "pattern": "patterns/square_dot.pbm",
    "geometry": {"a1_nm": [100, 0], "a2_nm": [0, 100]},
    "M0_kA_per_m": 670,
    "film_h_nm": 25,
    "bias_mT": [0.5, 0.1, 0.0]
  })");
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct CliRun {
  int code = -1;
  std::string out, err;
};

CliRun run(std::vector<std::string> args) {
  args.insert(args.begin(), "maglattice");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  CliRun r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::current_path() / "cli_unit" / name;
  fs::remove_all(d);
  return d;
}

}  // namespace

TEST_CASE("config defaults and units") {
  const RunConfig c = parse_config_json(minimal_config(), kData);
  CHECK(c.pattern_path == (kData / "patterns/square_dot.pbm").lexically_normal());
  CHECK_THAT(c.a1.x(), WithinRel(100e-9, 1e-12));
  CHECK_THAT(c.M0, WithinRel(670e3, 1e-12));
  CHECK_THAT(c.film_h, WithinRel(25e-9, 1e-12));
  CHECK_THAT(c.bias.y(), WithinRel(0.1e-3, 1e-12));
  CHECK(c.atom.species == "rb87");
  CHECK(c.seed == 1);
  const auto [lo, hi] = c.search_range();
  CHECK_THAT(lo, WithinRel(20e-9, 1e-12));
  CHECK_THAT(hi, WithinRel(300e-9, 1e-12));

  // Echoing and re-parsing gives the same configuration.
  const RunConfig again = parse_config_json(config_to_json(c), kData);
  CHECK(again.pattern_path == c.pattern_path);
  CHECK(again.bias.isApprox(c.bias));
  CHECK(again.M0 == c.M0);
}

TEST_CASE("config validation names the offending key") {
  json j = minimal_config();
  j.erase("bias_mT");
  CHECK_THROWS_WITH(parse_config_json(j, kData), ContainsSubstring("bias_mT"));

  j = minimal_config();
  j["geometry"]["a3_nm"] = {1, 2};
  CHECK_THROWS_WITH(parse_config_json(j, kData), ContainsSubstring("geometry.a3_nm"));

  j = minimal_config();
  j["film_h_nm"] = -3;
  CHECK_THROWS_AS(parse_config_json(j, kData), InputError);

  j = minimal_config();
  j["geometry"]["a2_nm"] = {200, 0};
  CHECK_THROWS_AS(parse_config_json(j, kData), InputError);

  j = minimal_config();
  j["bias_mT"] = {500, 0, 0};
  CHECK_THROWS_AS(parse_config_json(j, kData), InputError);

  j = minimal_config();
  j["truncation"] = {{"max_order", 0}};
  CHECK_THROWS_AS(parse_config_json(j, kData), InputError);

  CHECK_THROWS_WITH(parse_config(kData / "configs/missing.json"), ContainsSubstring("cannot open"));
}

TEST_CASE("sample configurations load") {
  const RunConfig thick = parse_config(kData / "configs/thick_film.json");
  CHECK_THAT(thick.M0, WithinRel(670e3, 1e-12));
  CHECK_THAT(thick.film_h, WithinRel(300e-9, 1e-12));
  CHECK_THAT(thick.geometry().period(), WithinRel(400e-9, 1e-12));
  CHECK_NOTHROW(thick.load_pattern());

  const RunConfig dot = parse_config(kData / "configs/square_dot.json");
  CHECK(dot.seed == 7);
  CHECK_THAT(dot.search_range().second, WithinRel(250e-9, 1e-12));
}

TEST_CASE("list parsing") {
  CHECK(cli::parse_list("1,2.5,-3", "x") == std::vector<double>{1, 2.5, -3});
  CHECK_THROWS_WITH(cli::parse_list("1,abc", "z-nm"), ContainsSubstring("--z-nm"));
  CHECK_THROWS_AS(cli::parse_list("1.5x", "x"), InputError);
  CHECK_THROWS_AS(cli::parse_list("", "x"), InputError);
}

TEST_CASE("hubbard subcommand writes a table and a report") {
  const fs::path dir = fresh_dir("hubbard");
  const CliRun r = run({"--out", dir.string(), "--no-timestamp", "hubbard", "--d", "425,100"});
  REQUIRE(r.code == 0);
  CHECK(r.err.empty());

  std::istringstream csv(slurp(dir / "hubbard.csv"));
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(csv, line)) lines.push_back(line);
  REQUIRE(lines.size() == 3);
  CHECK(lines[0] == "d_nm,V0_over_ER,E_R_nK,U_nK,J_nK,J2_over_U_nK");
  CHECK(lines[1].rfind("425,", 0) == 0);

  const ReportDocument doc = ReportDocument::from_json(json::parse(slurp(dir / "report.json")));
  CHECK(doc.command == "hubbard");
  CHECK_FALSE(doc.timestamp);
  CHECK_FALSE(doc.config);
  CHECK(doc.to_json().dump(2) + "\n" == slurp(dir / "report.json"));
}

TEST_CASE("fano output is independent of the thread count") {
  const fs::path a = fresh_dir("fano1"), b = fresh_dir("fano3");
  const std::vector<std::string> tail = {"fano", "--n0", "200", "--ntraj", "2000", "--eta", "0.8,0.5", "--bootstrap", "20"};
  std::vector<std::string> args_a = {"--out", a.string(), "--no-timestamp", "--seed", "5", "--threads", "1"};
  std::vector<std::string> args_b = {"--out", b.string(), "--no-timestamp", "--seed", "5", "--threads", "3"};
  args_a.insert(args_a.end(), tail.begin(), tail.end());
  args_b.insert(args_b.end(), tail.begin(), tail.end());
  REQUIRE(run(args_a).code == 0);
  REQUIRE(run(args_b).code == 0);
  CHECK(slurp(a / "report.json") == slurp(b / "report.json"));
  CHECK(slurp(a / "fano.csv") == slurp(b / "fano.csv"));

  // A different seed changes the numbers.
  const fs::path c = fresh_dir("fano_seed");
  std::vector<std::string> args_c = {"--out", c.string(), "--no-timestamp", "--seed", "6"};
  args_c.insert(args_c.end(), tail.begin(), tail.end());
  REQUIRE(run(args_c).code == 0);
  CHECK(slurp(a / "fano.csv") != slurp(c / "fano.csv"));
}

TEST_CASE("exit codes") {
  SECTION("structureless pattern has no traps") {
    const fs::path dir = fresh_dir("uniform");
    const CliRun r = run({"--config", (kData / "configs/uniform.json").string(), "--out", dir.string(), "traps"});
    CHECK(r.code == 2);
    CHECK_THAT(r.err, ContainsSubstring("no minima"));
    // The report is still written and carries the reason.
    const json rep = json::parse(slurp(dir / "report.json"));
    CHECK_THAT(rep["payload"]["error"].get<std::string>(), ContainsSubstring("no minima"));
  }
  SECTION("input errors") {
    const fs::path dir = fresh_dir("bad");
    CHECK(run({"--out", dir.string(), "traps"}).code == 1);  // needs --config
    CHECK(run({"--out", dir.string(), "hubbard", "--d", "425,x"}).code == 1);
    CHECK(run({"--out", dir.string(), "fano", "--dist", "binomial"}).code == 1);
    CHECK(run({"--out", dir.string(), "no-such-command"}).code == 1);
    CHECK(run({"--out", dir.string(), "--config", (kData / "configs/missing.json").string(), "traps"}).code == 1);
    const CliRun r = run({"--out", dir.string(), "--threads", "0", "fano"});
    CHECK(r.code == 1);
  }
}
