#include <doctest.h>

#include "kpseg/checkpoint.hpp"
#include "kpseg/run_config.hpp"

using namespace kpseg;

TEST_CASE("run config: empty object yields the full paper defaults") {
  RunConfig cfg = run_config_from_json("{}");
  CHECK(cfg.preset == "paper");
  CHECK(cfg.optim.lr == 0.01);
  CHECK(cfg.optim.momentum == 0.98);
  CHECK(cfg.net.batch_spheres == 6);
  CHECK(cfg.net.sphere_radius == 5.0);
  CHECK(cfg.net.stack_depth == 3);
  CHECK(cfg.net.kernel_points == 15);
  CHECK(cfg.net.influence_ratio == 1.5);
  CHECK(cfg.net.radii == std::vector<double>{0.1, 0.2, 0.4, 0.8, 1.6});
  CHECK(cfg.net.channels == std::vector<int>{32, 64, 128, 256, 512});
}

TEST_CASE("run config: stack_depth override and validation") {
  RunConfig two = run_config_from_json("{\"stack_depth\": 2}");
  CHECK(two.net.stack_depth == 2);
  CHECK(two.net.radii == std::vector<double>{0.1, 0.2, 0.4, 0.8, 1.6});

  CHECK_THROWS_AS(run_config_from_json("{\"stack_depth\": 0}"), ArgumentError);
}

TEST_CASE("run config: unknown keys rejected by name") {
  CHECK_THROWS_WITH_AS(run_config_from_json("{\"learning_rate\": 0.1}"),
                       doctest::Contains("learning_rate"), ArgumentError);
}

TEST_CASE("run config: type mismatches surface as parse errors") {
  CHECK_THROWS_AS(run_config_from_json("{\"lr\": \"fast\"}"), ParseError);
  CHECK_THROWS_AS(run_config_from_json("not json"), ParseError);
  CHECK_THROWS_AS(run_config_from_json("[1,2,3]"), ParseError);
}

TEST_CASE("run config: tiny preset shrinks the channel plan") {
  RunConfig tiny = run_config_from_json("{\"preset\": \"tiny\"}");
  CHECK(tiny.net.channels == std::vector<int>{8, 16, 32, 64, 128});
  CHECK(tiny.net.stack_depth == 3);
  CHECK(tiny.net.sphere_radius == 5.0);
  CHECK(tiny.optim.lr == 0.01);

  // overrides still apply on top of the preset
  RunConfig t1 = run_config_from_json("{\"preset\": \"tiny\", \"stack_depth\": 1}");
  CHECK(t1.net.stack_depth == 1);
}

TEST_CASE("run config: echo round trips through JSON") {
  RunConfig cfg = run_config_from_json("{\"preset\": \"tiny\", \"seed\": 99, \"lr\": 0.02}");
  RunConfig back = run_config_from_json(run_config_to_json(cfg));
  CHECK(back.seed == 99);
  CHECK(back.optim.lr == 0.02);
  CHECK(back.net.channels == cfg.net.channels);
}

TEST_CASE("network config: canonical json is stable and complete") {
  NetworkConfig cfg;
  std::string a = network_config_to_json(cfg);
  NetworkConfig parsed = network_config_from_json(a);
  CHECK(parsed == cfg);
  CHECK(a == network_config_to_json(parsed));
}
