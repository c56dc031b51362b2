#include <doctest.h>

#include <filesystem>

#include "support/toy_models.hpp"
#include "terra/pipeline/commands.hpp"
#include "terra/raster/hgt.hpp"
#include "terra/raster/io.hpp"

using namespace terra;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("terra_pipeline_" + name);
  fs::remove_all(p);
  return p;
}

raster::Texture line_sketch(int size) {
  raster::Texture s(size, size);
  for (int x = 0; x < size; ++x) s.at(x, size / 2, 0) = 255;
  return s;
}

}  // namespace

TEST_CASE("generator loads checkpoints and reports their hashes") {
  const fs::path dir = fresh_dir("load");
  test::write_toy_models(dir, false);
  const pipeline::Generator g = pipeline::load_generator(dir);
  CHECK(g.resolution() == 16);
  CHECK(!g.control);
  CHECK(g.checkpoint_files.at(pipeline::kLdmFile) == ckpt::file_hash(dir / pipeline::kLdmFile));
  CHECK(g.checkpoint_files.size() == 3);
  fs::remove(dir / pipeline::kTextureVaeFile);
  CHECK_THROWS_AS(pipeline::load_generator(dir), InvalidArgument);
}

TEST_CASE("generate is deterministic per seed and independent of batching") {
  const fs::path dir = fresh_dir("gen");
  test::write_toy_models(dir, true);
  const pipeline::Generator g = pipeline::load_generator(dir);
  REQUIRE(g.control);
  pipeline::SampleOptions opts;
  opts.steps = 5;
  const auto a = pipeline::generate(g, 3, 7, opts);
  REQUIRE(a.size() == 3);
  CHECK(a[0].height.width == 16);
  CHECK(a[0].texture.height == 16);
  for (float v : a[1].height.elevations) REQUIRE((v >= 0.0f && v <= 2000.0f));
  opts.batch = 1;
  const auto b = pipeline::generate(g, 3, 7, opts);
  for (int i = 0; i < 3; ++i) {
    CHECK(raster::encode_heightmap_png(a[i].height) == raster::encode_heightmap_png(b[i].height));
    CHECK(a[i].texture == b[i].texture);
  }
  const auto third = pipeline::generate(g, 1, 7, opts, std::nullopt, 2);
  CHECK(third[0].texture == a[2].texture);
  CHECK(!(pipeline::generate(g, 1, 8, opts)[0].texture == a[0].texture));

  const auto c1 = pipeline::generate(g, 2, 7, opts, line_sketch(16));
  const auto c2 = pipeline::generate(g, 2, 7, opts, line_sketch(16));
  CHECK(c1[0].height == c2[0].height);
  CHECK(!(c1[0].height == a[0].height));

  CHECK_THROWS_AS(pipeline::generate(g, 1, 7, opts, line_sketch(32)), InvalidArgument);
  opts.sampler = "euler";
  CHECK_THROWS_AS(pipeline::generate(g, 1, 7, opts), InvalidArgument);
  opts.sampler = "ddpm";
  CHECK(pipeline::generate(g, 1, 7, opts)[0].height.width == 16);
}

TEST_CASE("a condition needs an adapter") {
  const fs::path dir = fresh_dir("nocontrol");
  test::write_toy_models(dir, false);
  const pipeline::Generator g = pipeline::load_generator(dir);
  CHECK_THROWS_AS(pipeline::generate(g, 1, 1, {}, line_sketch(16)), InvalidArgument);
}

TEST_CASE("DEM dataset build: voids, elevation limit, region filter and count") {
  const fs::path dir = fresh_dir("dem");
  fs::create_directories(dir);
  const int n = raster::kHgtSide;
  raster::Heightmap hm(n, n, 0.0f, 30.0);
  raster::Texture tex(n, n);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      hm.at(x, y) = static_cast<float>(200 + (x + 2 * y) % 700);
      tex.at(x, y, 0) = static_cast<uint8_t>(x % 256);
    }
  std::vector<uint8_t> mask(hm.size(), 0);
  mask[static_cast<size_t>(10) * n + 10] = 1;  // void in patch 0
  hm.at(700, 100) = 2400.0f;                    // too high in patch 1
  raster::write_file_atomic(dir / "t.hgt", raster::write_hgt(hm, mask));
  raster::write_file_atomic(dir / "t.png", raster::encode_texture_png(tex));

  pipeline::PipelineConfig c = pipeline::pipeline_config_from_json(
      {{"dataset",
        {{"source", "dem"},
         {"count", 3},
         {"dem",
          {{"patch_px", 512},
           {"out_px", 512},
           {"tiles",
            {{{"id", "crowded"}, {"hgt", (dir / "t.hgt").string()}, {"texture", (dir / "t.png").string()},
              {"region", {{"mean_elevation_m", 500}, {"human_modification", 0.5}}}},
             {{"id", "n45e007"}, {"hgt", (dir / "t.hgt").string()}, {"texture", (dir / "t.png").string()},
              {"region", {{"mean_elevation_m", 500}, {"human_modification", 0.1}, {"climate", "temperate"}}}}}}}}}}});
  c.paths.dataset = dir / "out";
  std::vector<std::string> log;
  pipeline::dataset_build(c, [&](const std::string& s) { log.push_back(s); });
  const auto entries = synth::load_dataset(c.paths.dataset);
  REQUIRE(entries.size() == 3);
  CHECK(entries[0].id == "n45e007_00002");
  CHECK(entries[1].id == "n45e007_00003");
  CHECK(entries[2].id == "n45e007_00004");
  for (const auto& e : entries) {
    CHECK(e.pair.height.width == 512);
    CHECK(e.pair.height.max_elevation() <= 2000.0f);
    CHECK(e.sketch.has_value());
  }
  CHECK(entries[0].pair.height.at(0, 0) == hm.at(2 * 512, 0));
  CHECK(entries[0].pair.texture.at(3, 0, 0) == tex.at(2 * 512 + 3, 0, 0));
  CHECK(entries[0].sidecar.source_id == "dem:n45e007:2");
  REQUIRE(!log.empty());
  CHECK(log[0].find("crowded rejected: human") != std::string::npos);
  CHECK(fs::exists(c.paths.dataset / "run_manifest.json"));

  c.dataset.dem.tiles[1].hgt = dir / "absent.hgt";
  c.dataset.dem.tiles.erase(c.dataset.dem.tiles.begin());
  CHECK_THROWS_AS(pipeline::dataset_build(c), InvalidArgument);
}
