#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "dpwavelet/armodel.hpp"
#include "dpwavelet/checkpoint.hpp"
#include "dpwavelet/config.hpp"
#include "dpwavelet/image_io.hpp"
#include "dpwavelet/synth.hpp"

using namespace dpw;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const char* tag) {
  const fs::path dir = fs::temp_directory_path() / (std::string("dpwv_test_") + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(DPW_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WEXITSTATUS(rc);
}

}  // namespace

TEST_CASE("checkpoint container round trips and detects corruption") {
  const fs::path dir = scratch_dir("ckpt");
  const std::string path = (dir / "test.dpwv").string();

  checkpoint::CheckpointContainer cc;
  cc.sections["alpha"] = {1, 2, 3, 4, 5};
  cc.sections["beta"] = std::vector<uint8_t>(1000, 0x5a);
  checkpoint::save(path, cc);

  const auto back = checkpoint::load(path);
  CHECK(back.sections.at("alpha") == cc.sections.at("alpha"));
  CHECK(back.sections.at("beta") == cc.sections.at("beta"));

  // flip one payload byte: the section CRC must catch it
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(-10, std::ios::end);
    char b;
    f.seekg(-10, std::ios::end);
    f.read(&b, 1);
    b = char(b ^ 0xff);
    f.seekp(-10, std::ios::end);
    f.write(&b, 1);
  }
  CHECK_THROWS_AS(checkpoint::load(path), IoError);
  CHECK_THROWS_AS(checkpoint::load((dir / "missing.dpwv").string()), IoError);
}

TEST_CASE("model params serialize with their segment manifest") {
  armodel::ModelConfig cfg;
  cfg.vocab_size = 10;
  cfg.approx_vocab = 4;
  cfg.cond_vocab = 2;
  cfg.max_seq_len = 8;
  cfg.embed_dim = 8;
  cfg.n_layers = 1;
  cfg.n_heads = 2;
  cfg.mlp_width = 8;
  cfg.coarse_prefix_len = 2;
  cfg.seed = 3;
  auto params = armodel::init_params(cfg);
  armodel::set_stage_mask(params, armodel::Stage::CoarseFinetune);

  const auto bytes = checkpoint::serialize_params(params);
  const auto back = checkpoint::parse_params(bytes);
  CHECK(back.cfg.vocab_size == cfg.vocab_size);
  CHECK(back.segments.size() == params.segments.size());
  CHECK(back.trainable == params.trainable);
  CHECK((back.theta - params.theta).cwiseAbs().maxCoeff() == 0.0);

  auto corrupt = bytes;
  corrupt[0] ^= 0xff;  // breaks the config hash gate
  CHECK_THROWS(checkpoint::parse_params(corrupt));
}

TEST_CASE("config precedence: defaults < file < overrides") {
  const fs::path dir = scratch_dir("cfg");
  const std::string file = (dir / "run.cfg").string();
  {
    std::ofstream out(file);
    out << "# comment line\n"
        << "alpha=from_file\n"
        << "beta = 2\n"
        << "\n"
        << "gamma=0.5\n";
  }
  config::KeyValueConfig cfg;
  cfg.set("alpha", "default");
  cfg.set("delta", "kept");
  cfg.load_file(file);
  cfg.apply_overrides({"beta=7", "epsilon=inf"});

  CHECK(cfg.get_string("alpha") == "from_file");
  CHECK(cfg.get_int("beta", 0) == 7);
  CHECK(cfg.get_double("gamma", 0.0) == 0.5);
  CHECK(cfg.get_string("delta") == "kept");
  CHECK(std::isinf(cfg.get_double("epsilon", 0.0)));
  CHECK_THROWS_AS(cfg.get_string("missing"), ConfigError);

  // echo is sorted and byte stable
  CHECK(cfg.echo() == cfg.echo());
  CHECK(cfg.echo().find("alpha=from_file") != std::string::npos);
}

TEST_CASE("image io round trips 8-bit planes") {
  const fs::path dir = scratch_dir("img");
  synth::SynthSpec spec;
  const ImageTensor img = synth::synth_image(spec, 0, 0);
  const std::string path = (dir / "x.pgm").string();
  imageio::write_image(path, img);
  const ImageTensor back = imageio::read_image(path);
  REQUIRE(back.num_channels() == 1);
  // 8-bit quantization: within half a level
  CHECK((back.channels[0] - img.channels[0]).cwiseAbs().maxCoeff() <=
        0.5 / 255.0 + 1e-12);

  synth::SynthSpec rgb = spec;
  rgb.channels = 3;
  const ImageTensor color = synth::synth_image(rgb, 1, 0);
  const std::string cpath = (dir / "x.ppm").string();
  imageio::write_image(cpath, color);
  CHECK(imageio::read_image(cpath).num_channels() == 3);

  CHECK_THROWS_AS(imageio::read_image((dir / "none.pgm").string()), IoError);
}

TEST_CASE("cli exit codes") {
  const fs::path dir = scratch_dir("cli");
  const std::string d = dir.string();

  // data generation + accounting succeed
  CHECK(run_cli("synth-data --out " + d + "/pub --per-class 4 --seed 1") == 0);
  CHECK(run_cli("account --sigma 2.0 --q 0.5 --steps 10") == 0);
  CHECK(run_cli("account --sigma 0 --q 0.5 --steps 10") == 0);  // eps=inf, fine

  // config errors
  CHECK(run_cli("synth-data --out " + d + "/bad --style sideways") != 0);
  CHECK(run_cli("account") == 2);  // neither sigma nor epsilon
  CHECK(run_cli("pretrain -D out_dir=" + d + "/run") == 2);  // no public_dir

  // missing data
  CHECK(run_cli("pretrain -D public_dir=" + d + "/nope -D out_dir=" + d +
                "/run") == 4);

  // infeasible privacy budget
  CHECK(run_cli("account --epsilon 1e-12 --q 0.5 --steps 100") == 3);
}

TEST_CASE("cli pipeline smoke run") {
  const fs::path dir = scratch_dir("smoke");
  const std::string d = dir.string();
  REQUIRE(run_cli("synth-data --out " + d + "/pub --per-class 8 --seed 1 --style public") == 0);
  REQUIRE(run_cli("synth-data --out " + d + "/priv --per-class 8 --seed 2 --style private") == 0);

  const std::string common = " -D pretrain_steps=40 -D steps=3 -D sigma=2.0";
  REQUIRE(run_cli("pretrain -D public_dir=" + d + "/pub -D out_dir=" + d +
                  "/run" + common) == 0);
  CHECK(fs::exists(dir / "run" / "pretrained.dpwv"));
  CHECK(fs::exists(dir / "run" / "config_echo.txt"));

  REQUIRE(run_cli("finetune-dp -D private_dir=" + d + "/priv -D out_dir=" + d +
                  "/run -D pretrained=" + d + "/run/pretrained.dpwv" + common) == 0);
  CHECK(fs::exists(dir / "run" / "finetuned.dpwv"));
  CHECK(fs::exists(dir / "run" / "run_manifest.json"));

  // an infeasible budget exits 3 and leaves no checkpoint behind
  CHECK(run_cli("finetune-dp -D private_dir=" + d + "/priv -D out_dir=" + d +
                "/bad -D pretrained=" + d + "/run/pretrained.dpwv" + common +
                " -D epsilon=1e-12 -D sigma=1e-9") == 3);
  CHECK(!fs::exists(dir / "bad" / "finetuned.dpwv"));

  REQUIRE(run_cli("sample -D out_dir=" + d + "/samples -D pretrained=" + d +
                  "/run/pretrained.dpwv -D finetuned=" + d +
                  "/run/finetuned.dpwv -D sample_count=4" + common) == 0);
  CHECK(fs::exists(dir / "samples" / "samples.json"));

  REQUIRE(run_cli("eval -D real_dir=" + d + "/priv -D generated_dir=" + d +
                  "/samples -D out_dir=" + d + "/eval -D finetuned=" + d +
                  "/run/finetuned.dpwv" + common) == 0);
  CHECK(fs::exists(dir / "eval" / "metrics.json"));
}
