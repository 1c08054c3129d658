#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "airnet/model.hpp"
#include "airnet/runconfig.hpp"

using namespace airnet;

namespace {

AirNet<float> demo_model(std::uint64_t seed) {
  EncoderConfig ec;
  ec.d = 12;
  ec.anchors = 6;
  ec.l1 = 1;
  ec.l2 = 2;
  ec.k_enc = 4;
  ec.cardinalities = {6};
  DecoderConfig dc;
  dc.k_dec = 3;
  dc.d_dec = 10;
  dc.head_hidden = 16;
  dc.head_blocks = 3;
  auto m = AirNet<float>::make(ec, dc);
  m.init(seed);
  return m;
}

}  // namespace

TEST_CASE("checkpoints round trip bit-identically for f32 models", "[io]") {
  auto dir = std::filesystem::temp_directory_path() / "airnet_ck_test";
  std::filesystem::create_directories(dir);
  std::string path = (dir / "model.ckpt").string();

  auto model = demo_model(123);
  save_model(path, model, {{"train.seed", "9"}});
  auto loaded = load_model<float>(path);

  REQUIRE(loaded.enc_cfg.d == 12);
  REQUIRE(loaded.enc_cfg.anchors == 6);
  REQUIRE(loaded.dec_cfg.head_blocks == 3);
  auto a = collect_params<float>(model, true);
  auto b = collect_params<float>(loaded, true);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].name == b[i].name);
    REQUIRE(a[i].tensor->vec() == b[i].tensor->vec());
  }

  auto ck = load_checkpoint(path);
  REQUIRE(ck.meta.at("train.seed") == "9");
  REQUIRE(ck.meta.at("model.d") == "12");

  // shape mismatch is rejected
  auto other = demo_model(1);
  other.enc_cfg.d = 16;
  auto wrong = AirNet<float>::make(other.enc_cfg, other.dec_cfg);
  REQUIRE_THROWS_AS(apply_checkpoint<float>(ck, wrong), InvalidArgument);

  std::filesystem::remove_all(dir);
}

TEST_CASE("saving twice yields byte-identical checkpoints", "[io]") {
  auto dir = std::filesystem::temp_directory_path() / "airnet_ck_det";
  std::filesystem::create_directories(dir);
  auto model = demo_model(5);
  save_model((dir / "a.ckpt").string(), model);
  save_model((dir / "b.ckpt").string(), model);
  std::ifstream fa((dir / "a.ckpt").string(), std::ios::binary);
  std::ifstream fb((dir / "b.ckpt").string(), std::ios::binary);
  std::string sa((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
  std::string sb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
  REQUIRE(sa == sb);
  REQUIRE(!sa.empty());
  std::filesystem::remove_all(dir);
}

TEST_CASE("kv config files parse, merge, and reject unknown keys", "[io]") {
  auto dir = std::filesystem::temp_directory_path() / "airnet_cfg_test";
  std::filesystem::create_directories(dir);
  std::string path = (dir / "run.cfg").string();
  {
    std::ofstream out(path);
    out << "# comment line\n";
    out << "epochs = 12\n";
    out << "lr=0.001   # trailing comment\n";
    out << "\n";
    out << "out = runs/exp1\n";
  }
  KvMap effective = {{"epochs", "5"}, {"lr", "0.0005"}, {"out", ""}, {"seed", "0"}};
  apply_kv_file(effective, path);
  REQUIRE(effective.at("epochs") == "12");
  REQUIRE(effective.at("lr") == "0.001");
  REQUIRE(effective.at("out") == "runs/exp1");
  REQUIRE(effective.at("seed") == "0");

  {
    std::ofstream out(path);
    out << "no_such_key=1\n";
  }
  KvMap fresh = {{"epochs", "5"}};
  REQUIRE_THROWS_AS(apply_kv_file(fresh, path), InvalidArgument);

  // echo is sorted and deterministic
  write_kv_file((dir / "echo.cfg").string(), effective);
  auto round = parse_kv_file((dir / "echo.cfg").string());
  REQUIRE(round == effective);
  std::filesystem::remove_all(dir);
}
