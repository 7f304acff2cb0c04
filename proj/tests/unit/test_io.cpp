#include <doctest.h>

#include <filesystem>
#include <random>

#include "planted.hpp"
#include "privsurf/io.hpp"

using namespace privsurf;
using namespace privsurf::testing;
using privsurf::io::ordered_json;

TEST_SUITE("io") {
  TEST_CASE("matrices round-trip as arrays of rows") {
    Matrix m(2, 3);
    m << 1, 2, 3, 4, 5, 6.25;
    const ordered_json j = io::matrix_to_json(m);
    CHECK(j.dump() == "[[1.0,2.0,3.0],[4.0,5.0,6.25]]");
    CHECK(io::matrix_from_json(j) == m);
    CHECK_THROWS_AS(io::matrix_from_json(ordered_json::parse("[[1,2],[3]]")), Error);
    CHECK_THROWS_AS(io::matrix_from_json(ordered_json::parse("{\"a\":1}")), Error);
  }

  TEST_CASE("surface configs round-trip") {
    const ordered_json j = ordered_json::parse(R"({
      "window": {"start_date": "2013-03-27", "utc_offset_minutes": -240, "days": 3},
      "roster": ["a", "b"],
      "entries": [{"feature": "gps", "granularity": "1h"}, {"feature": "sms", "granularity": "1d"}]})");
    const PrivacySurfaceConfig cfg = io::surface_config_from_json(j);
    CHECK(cfg.window == StudyWindow::from_local_date("2013-03-27", -240, 3));
    CHECK(cfg.roster == std::vector<std::string>{"a", "b"});
    REQUIRE(cfg.entries.size() == 2);
    CHECK(cfg.entries[0].feature.name == "gps");
    CHECK(cfg.entries[0].granularity == Granularity::Hour1);
    const PrivacySurfaceConfig again = io::surface_config_from_json(io::surface_config_to_json(cfg));
    CHECK(again.window == cfg.window);
    CHECK(again.roster == cfg.roster);
    CHECK(again.entries == cfg.entries);

    ordered_json unknown = j;
    unknown["entries"][0]["feature"] = "telepathy";
    CHECK_THROWS_AS(io::surface_config_from_json(unknown), Error);
    ordered_json bad_gran = j;
    bad_gran["entries"][0]["granularity"] = "2h";
    CHECK_THROWS_AS(io::surface_config_from_json(bad_gran), Error);
  }

  TEST_CASE("granularity tokens") {
    for (Granularity g : kAllGranularities) CHECK(parse_granularity(to_token(g)) == g);
    CHECK_THROWS_AS(parse_granularity("5m"), Error);
  }

  TEST_CASE("models round-trip bit-exactly") {
    PlantedParafac2 p = planted_parafac2({.rows = {6, 7, 5}, .users = 4, .rank = 2, .seed = 3});
    add_noise_db(p.data, 15.0, 1);
    p.data.user_ids = {"a", "b", "c", "d"};
    p.data.info = {{"gps", Granularity::Hour1, 100}, {"sms", Granularity::Day1, 100}, {"dark", Granularity::Minute15, 100}};
    Parafac2Model m = parafac2_als(p.data, 2, {.max_iters = 30});
    const ordered_json j = io::model_to_json(m);
    CHECK(j["rank"] == 2);
    CHECK(j["dims"]["K"] == 3);
    const Parafac2Model back = io::model_from_json(ordered_json::parse(j.dump()));
    CHECK(back.H == m.H);
    CHECK(back.S == m.S);
    CHECK(back.V == m.V);
    for (std::size_t k = 0; k < 3; ++k) CHECK(back.Q[k] == m.Q[k]);
    CHECK(back.info == m.info);
    CHECK(back.user_ids == m.user_ids);
    CHECK(back.fit_history == m.fit_history);
    CHECK(back.iterations == m.iterations);
    CHECK(back.converged == m.converged);
    CHECK(io::model_to_json(back).dump() == j.dump());

    ordered_json broken = j;
    broken["V"] = io::matrix_to_json(Matrix::Ones(4, 3));
    CHECK_THROWS_AS(io::model_from_json(broken), Error);
  }

  TEST_CASE("surface files round-trip") {
    PlantedParafac2 p = planted_parafac2({.rows = {24, 2}, .users = 3, .rank = 2, .seed = 4});
    mask_at_random(p.data, 0.3, 2);
    p.data.user_ids = {"x", "y,z", "w"};
    const StudyWindow w = StudyWindow::from_local_date("2013-03-27", -240, 2);
    p.data.info = {{"voice", Granularity::Hour1, w.start}, {"calls", Granularity::Day1, w.start}};
    PrivacySurfaceConfig cfg{{{*find_feature("voice"), Granularity::Hour1}, {*find_feature("calls"), Granularity::Day1}},
                             w, p.data.user_ids};
    const auto dir = std::filesystem::temp_directory_path() / "privsurf_io_surface";
    std::filesystem::remove_all(dir);
    const ordered_json manifest = io::write_surface(dir, p.data, cfg);
    CHECK(manifest["slices"].size() == 2);
    const MultiSet back = io::read_surface(dir / "surface.json");
    CHECK(back.user_ids == p.data.user_ids);
    CHECK(back.info == p.data.info);
    for (std::size_t k = 0; k < 2; ++k) {
      CHECK(back.slices[k].mask.cwiseEqual(p.data.slices[k].mask).all());
      CHECK(back.slices[k].data == p.data.slices[k].data);
    }
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("report serializers") {
    RankSweepResult r;
    r.candidates = {{2, 98.5, false, 0.9, 0.95, true}, {3, 12.0, false, 0.93, 0.97, false}};
    r.chosen_rank = 2;
    r.trace = {"rank 2 qualifies"};
    const ordered_json j = io::to_json(r);
    CHECK(j["chosen_rank"] == 2);
    CHECK(j["candidates"][1]["core_consistency"] == 12.0);
    CHECK(j["candidates"][0]["qualifies"] == true);

    const Correlation c{-0.5, 0.01, 30};
    CHECK(io::to_json(c).dump() == R"({"r":-0.5,"p":0.01,"n":30})");
  }

  TEST_CASE("json files end with a newline and read back") {
    const auto path = std::filesystem::temp_directory_path() / "privsurf_io.json";
    io::write_json(path, {{"b", 1}, {"a", 2}});
    CHECK(io::read_json(path).dump() == R"({"b":1,"a":2})");
    std::filesystem::remove(path);
    CHECK_THROWS_AS(io::read_json(path), Error);
  }
}
