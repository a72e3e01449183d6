#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <string>

#include "dgtd/config.hpp"
#include "dgtd/io.hpp"
#include "dgtd/rng.hpp"

using namespace dgtd;

namespace {
std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}
}  // namespace

TEST_CASE("config parses sections, scalars, arrays and comments") {
  const Config cfg = Config::parse_string(R"(
# experiment
[run]
gamma = 0.95      # discount
modes = ["diffusion", "centralized"]
horizon = 100000
parallel = true

[network]
centers = [395, 368, 21]
)");
  CHECK(cfg.get_real("run", "gamma") == doctest::Approx(0.95));
  CHECK(cfg.get_int("run", "horizon") == 100000);
  CHECK(cfg.get_bool("run", "parallel", false));
  CHECK(cfg.get_string_array("run", "modes") ==
        std::vector<std::string>{"diffusion", "centralized"});
  CHECK(cfg.get_int_array("network", "centers") == std::vector<long>{395, 368, 21});
  CHECK(cfg.get_real("run", "missing", 7.0) == 7.0);
}

TEST_CASE("config errors carry line numbers") {
  try {
    Config::parse_string("[run]\nkey value\n", "bad.toml");
    FAIL("expected a parse error");
  } catch (const std::runtime_error& err) {
    CHECK(std::string(err.what()).find("bad.toml:2") != std::string::npos);
  }
  try {
    const Config cfg = Config::parse_string("[run]\ngamma = \"x\"\n", "bad.toml");
    cfg.get_real("run", "gamma");
    FAIL("expected a type error");
  } catch (const std::runtime_error& err) {
    CHECK(std::string(err.what()).find("bad.toml:2") != std::string::npos);
  }
}

TEST_CASE("matrix text round trip is exact") {
  Rng rng(3);
  Matrix m(5, 3);
  for (long i = 0; i < m.size(); ++i) m(i / 3, i % 3) = 2.0 * rng.uniform() - 1.0;
  const std::string path = temp_path("dgtd_io_test.txt");
  save_matrix_text(path, m);
  const Matrix back = load_matrix_text(path);
  CHECK((back - m).cwiseAbs().maxCoeff() == 0.0);
  std::remove(path.c_str());
}
