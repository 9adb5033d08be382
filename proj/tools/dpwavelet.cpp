#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "dpwavelet/accountant.hpp"
#include "dpwavelet/checkpoint.hpp"
#include "dpwavelet/config.hpp"
#include "dpwavelet/image_io.hpp"
#include "dpwavelet/pipeline.hpp"
#include "dpwavelet/synth.hpp"
#include "dpwavelet/wavelet.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dpw;

namespace {

enum ExitCode {
  kOk = 0,
  kConfigError = 2,
  kPrivacyInfeasible = 3,
  kDataError = 4,
  kInternalError = 5,
};

config::KeyValueConfig defaults_config() {
  config::KeyValueConfig cfg;
  cfg.set("image_size", "16");
  cfg.set("channels", "1");
  cfg.set("depth", "2");
  cfg.set("classes", "4");
  cfg.set("approx_k", "32");
  cfg.set("detail_k", "16");
  cfg.set("approx_patch", "1");
  cfg.set("detail_patch", "4");
  cfg.set("embed_dim", "32");
  cfg.set("n_layers", "2");
  cfg.set("n_heads", "4");
  cfg.set("mlp_width", "64");
  cfg.set("model_seed", "1");
  cfg.set("pretrain_steps", "800");
  cfg.set("pretrain_batch", "32");
  cfg.set("pretrain_lr", "0.003");
  cfg.set("pretrain_seed", "2");
  cfg.set("clip", "1.0");
  cfg.set("q", "0.25");
  cfg.set("steps", "30");
  cfg.set("lr", "0.02");
  cfg.set("variant", "adam");
  cfg.set("beta1", "0.9");
  cfg.set("beta2", "0.999");
  cfg.set("eps_adam", "1e-8");
  cfg.set("dp_seed", "7");
  cfg.set("delta", "1e-5");
  cfg.set("epsilon", "8.0");
  cfg.set("sample_count", "16");
  cfg.set("temperature", "1.0");
  cfg.set("sample_seed", "3");
  return cfg;
}

pipeline::PipelineConfig build_pipeline_config(const config::KeyValueConfig& c) {
  pipeline::PipelineConfig p;
  p.image_size = int(c.get_int("image_size", 16));
  p.channels = int(c.get_int("channels", 1));
  p.depth = int(c.get_int("depth", 2));
  p.cond_vocab = int(c.get_int("classes", 4));
  p.tok.approx_k = int(c.get_int("approx_k", 32));
  p.tok.detail_k = int(c.get_int("detail_k", 16));
  p.tok.approx_patch = int(c.get_int("approx_patch", 1));
  p.tok.detail_patch = int(c.get_int("detail_patch", 4));
  p.embed_dim = int(c.get_int("embed_dim", 32));
  p.n_layers = int(c.get_int("n_layers", 2));
  p.n_heads = int(c.get_int("n_heads", 4));
  p.mlp_width = int(c.get_int("mlp_width", 64));
  p.model_seed = uint64_t(c.get_int("model_seed", 1));
  p.pretrain_steps = int(c.get_int("pretrain_steps", 800));
  p.pretrain_batch = int(c.get_int("pretrain_batch", 32));
  p.pretrain_lr = c.get_double("pretrain_lr", 3e-3);
  p.pretrain_seed = uint64_t(c.get_int("pretrain_seed", 2));
  p.dp.clip = c.get_double("clip", 1.0);
  p.dp.q = c.get_double("q", 0.25);
  p.dp.steps = int(c.get_int("steps", 30));
  p.dp.lr = c.get_double("lr", 0.02);
  p.dp.beta1 = c.get_double("beta1", 0.9);
  p.dp.beta2 = c.get_double("beta2", 0.999);
  p.dp.eps_adam = c.get_double("eps_adam", 1e-8);
  p.dp.seed = uint64_t(c.get_int("dp_seed", 7));
  const std::string variant = c.get_string("variant", "adam");
  if (variant == "sgd")
    p.dp.variant = dpoptim::DpSgdConfig::Variant::Sgd;
  else if (variant == "adam")
    p.dp.variant = dpoptim::DpSgdConfig::Variant::Adam;
  else
    throw ConfigError("variant must be sgd or adam: " + variant);
  p.delta = c.get_double("delta", 1e-5);
  p.target_epsilon = c.get_double("epsilon", 8.0);

  // sigma: explicit value wins; otherwise calibrate against the budget,
  // or run noiseless in the non-private (epsilon=inf) mode.
  if (c.has("sigma")) {
    p.dp.sigma = c.get_double("sigma", 0.0);
  } else if (std::isinf(p.target_epsilon)) {
    p.dp.sigma = 0.0;
  } else {
    p.dp.sigma = accountant::calibrate_sigma({p.target_epsilon, p.delta},
                                             p.dp.q, p.dp.steps);
  }
  p.sample_count = int(c.get_int("sample_count", 16));
  p.temperature = c.get_double("temperature", 1.0);
  p.sample_seed = uint64_t(c.get_int("sample_seed", 3));
  return p;
}

config::KeyValueConfig resolve_config(const std::string& config_path,
                                      const std::vector<std::string>& sets) {
  config::KeyValueConfig cfg = defaults_config();
  if (!config_path.empty()) cfg.load_file(config_path);
  cfg.apply_overrides(sets);
  return cfg;
}

void write_text_atomic(const std::string& path, const std::string& text) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for write: " + tmp);
    out << text;
    out.flush();
    if (!out) throw IoError("write failed: " + tmp);
  }
  fs::rename(tmp, path);
}

void echo_config(const config::KeyValueConfig& cfg, const std::string& out_dir) {
  fs::create_directories(out_dir);
  write_text_atomic(out_dir + "/config_echo.txt", cfg.echo());
  std::cerr << "resolved config written to " << out_dir << "/config_echo.txt\n";
}

struct LoadedDataset {
  pipeline::Dataset data;
  std::string content_hash;
};

LoadedDataset load_dataset(const std::string& dir) {
  const std::string manifest_path = dir + "/manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open dataset manifest: " + manifest_path);
  json j;
  in >> j;
  LoadedDataset out;
  out.content_hash = j.at("content_hash").get<std::string>();
  for (const auto& item : j.at("items")) {
    out.data.images.push_back(
        imageio::read_image(dir + "/" + item.at("path").get<std::string>()));
    out.data.conds.push_back(item.at("cond").get<int>());
  }
  return out;
}

void save_model_checkpoint(const std::string& path,
                           const tokenizer::CodebookSet& codebooks,
                           const armodel::ModelParams& params,
                           const config::KeyValueConfig& cfg) {
  checkpoint::CheckpointContainer cc;
  cc.sections["codebooks"] = checkpoint::serialize_codebooks(codebooks);
  cc.sections["params"] = checkpoint::serialize_params(params);
  const std::string echo = cfg.echo();
  cc.sections["config"] = std::vector<uint8_t>(echo.begin(), echo.end());
  checkpoint::save(path, cc);
}

int cmd_synth_data(const std::string& out_dir, int classes, int per_class,
                   uint64_t seed, const std::string& style_name, int image_size,
                   int channels) {
  synth::SynthSpec spec;
  spec.image_size = image_size;
  spec.channels = channels;
  spec.classes = classes;
  spec.seed = seed;
  if (style_name == "public")
    spec.style = synth::Style::Public;
  else if (style_name == "private")
    spec.style = synth::Style::Private;
  else
    throw ConfigError("style must be public or private: " + style_name);

  fs::create_directories(out_dir);
  json items = json::array();
  uint64_t hash = 0xcbf29ce484222325ULL;
  for (int c = 0; c < classes; ++c) {
    for (int i = 0; i < per_class; ++i) {
      const ImageTensor img = synth::synth_image(spec, c, i);
      char name[64];
      std::snprintf(name, sizeof(name), "class%02d_item%04d.%s", c, i,
                    channels == 1 ? "pgm" : "ppm");
      imageio::write_image(out_dir + "/" + name, img);
      std::ifstream in(out_dir + "/" + name, std::ios::binary);
      std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
      for (uint8_t b : bytes) {
        hash ^= b;
        hash *= 0x100000001b3ULL;
      }
      items.push_back({{"path", name}, {"cond", c}});
    }
  }
  json manifest;
  manifest["split"] = style_name;
  manifest["items"] = items;
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", (unsigned long long)hash);
  manifest["content_hash"] = hex;
  manifest["generator"] = {{"classes", classes},
                           {"items_per_class", per_class},
                           {"seed", seed},
                           {"image_size", image_size},
                           {"channels", channels},
                           {"style", style_name}};
  write_text_atomic(out_dir + "/manifest.json", manifest.dump(2));
  std::cout << "wrote " << classes * per_class << " images to " << out_dir
            << "\n";
  return kOk;
}

int cmd_pretrain(const config::KeyValueConfig& cfg) {
  const pipeline::PipelineConfig pcfg = build_pipeline_config(cfg);
  const std::string public_dir = cfg.get_string("public_dir");
  const std::string out_dir = cfg.get_string("out_dir");
  echo_config(cfg, out_dir);
  const LoadedDataset pub = load_dataset(public_dir);
  std::ofstream log(out_dir + "/pretrain_log.txt");
  const pipeline::PublicModel model = pipeline::pretrain_public(
      pub.data, pcfg, [&](const dpoptim::StepLog& s) {
        log << "step=" << s.step << " loss=" << s.loss
            << " batch=" << s.realized_batch << "\n";
      });
  save_model_checkpoint(out_dir + "/pretrained.dpwv", model.codebooks,
                        model.params, cfg);
  std::cout << "pretrained checkpoint: " << out_dir << "/pretrained.dpwv\n";
  return kOk;
}

int cmd_finetune_dp(const config::KeyValueConfig& cfg) {
  const pipeline::PipelineConfig pcfg = build_pipeline_config(cfg);
  const std::string private_dir = cfg.get_string("private_dir");
  const std::string out_dir = cfg.get_string("out_dir");
  const std::string pretrained_path = cfg.get_string("pretrained");
  echo_config(cfg, out_dir);

  const auto cc = checkpoint::load(pretrained_path);
  pipeline::PublicModel base;
  base.codebooks = checkpoint::parse_codebooks(cc.sections.at("codebooks"));
  base.params = checkpoint::parse_params(cc.sections.at("params"));

  const LoadedDataset priv = load_dataset(private_dir);
  if (cfg.has("public_dir")) {
    const LoadedDataset pub = load_dataset(cfg.get_string("public_dir"));
    if (pub.content_hash == priv.content_hash)
      std::cerr << "warning: public and private corpora have identical "
                   "content hashes; they must be disjoint\n";
  }

  pipeline::AccessAudit audit;
  audit.enter("stage1");
  pipeline::PrivateDataset private_data(priv.data, &audit);
  pipeline::RunManifest manifest;
  std::ofstream log(out_dir + "/finetune_log.txt");
  const armodel::ModelParams finetuned = pipeline::finetune_private(
      base, private_data, pcfg, &manifest, [&](const dpoptim::StepLog& s) {
        log << "step=" << s.step << " loss=" << s.loss
            << " clipped_fraction=" << s.clipped_fraction
            << " realized_batch=" << s.realized_batch << "\n";
      });
  save_model_checkpoint(out_dir + "/finetuned.dpwv", base.codebooks, finetuned,
                        cfg);
  manifest.outputs = {"finetuned.dpwv"};
  write_text_atomic(out_dir + "/run_manifest.json", manifest.to_json());
  std::cout << "epsilon=" << manifest.epsilon << "\n"
            << "finetuned checkpoint: " << out_dir << "/finetuned.dpwv\n";
  return kOk;
}

int cmd_sample(const config::KeyValueConfig& cfg) {
  const pipeline::PipelineConfig pcfg = build_pipeline_config(cfg);
  const std::string out_dir = cfg.get_string("out_dir");
  echo_config(cfg, out_dir);
  const auto pre = checkpoint::load(cfg.get_string("pretrained"));
  const auto fin = checkpoint::load(cfg.get_string("finetuned"));
  const auto codebooks =
      checkpoint::parse_codebooks(pre.sections.at("codebooks"));
  const auto pretrained = checkpoint::parse_params(pre.sections.at("params"));
  const auto finetuned = checkpoint::parse_params(fin.sections.at("params"));

  std::vector<int> conds;
  for (int c = 0; c < pcfg.cond_vocab; ++c) conds.push_back(c);
  const pipeline::GenerateResult result = pipeline::generate(
      finetuned, pretrained, codebooks, conds, pcfg.sample_count,
      pcfg.temperature, pcfg.sample_seed);

  json items = json::array();
  const char* ext = pcfg.channels == 1 ? "pgm" : "ppm";
  for (size_t i = 0; i < result.images.size(); ++i) {
    char name[64], cname[64];
    std::snprintf(name, sizeof(name), "sample%04zu.%s", i, ext);
    std::snprintf(cname, sizeof(cname), "coarse%04zu.%s", i, ext);
    imageio::write_image(out_dir + "/" + name, result.images[i]);
    imageio::write_image(out_dir + "/" + cname, result.coarse_images[i]);
    items.push_back(
        {{"sample", name}, {"coarse", cname}, {"cond", result.conds[i]}});
  }
  write_text_atomic(out_dir + "/samples.json", json{{"items", items}}.dump(2));
  std::cout << "wrote " << result.images.size() << " samples to " << out_dir
            << "\n";
  return kOk;
}

int cmd_eval(const config::KeyValueConfig& cfg) {
  const pipeline::PipelineConfig pcfg = build_pipeline_config(cfg);
  const std::string out_dir = cfg.get_string("out_dir");
  echo_config(cfg, out_dir);
  const LoadedDataset real = load_dataset(cfg.get_string("real_dir"));

  // generated samples live alongside samples.json from cmd_sample
  const std::string gen_dir = cfg.get_string("generated_dir");
  std::ifstream in(gen_dir + "/samples.json");
  if (!in) throw IoError("cannot open " + gen_dir + "/samples.json");
  json j;
  in >> j;
  std::vector<ImageTensor> generated, coarse;
  for (const auto& item : j.at("items")) {
    generated.push_back(
        imageio::read_image(gen_dir + "/" + item.at("sample").get<std::string>()));
    coarse.push_back(
        imageio::read_image(gen_dir + "/" + item.at("coarse").get<std::string>()));
  }

  const tokenizer::CodebookSet* cb = nullptr;
  const armodel::ModelParams* model = nullptr;
  tokenizer::CodebookSet cb_store;
  armodel::ModelParams model_store;
  if (cfg.has("finetuned")) {
    const auto cc = checkpoint::load(cfg.get_string("finetuned"));
    cb_store = checkpoint::parse_codebooks(cc.sections.at("codebooks"));
    model_store = checkpoint::parse_params(cc.sections.at("params"));
    cb = &cb_store;
    model = &model_store;
  }
  const pipeline::MetricReport report = pipeline::evaluate(
      real.data.images, generated, pcfg.depth, cb, model,
      cb ? &real.data.conds : nullptr, &coarse);
  write_text_atomic(out_dir + "/metrics.json", report.to_json());
  std::cout << report.to_table();
  return kOk;
}

int cmd_account(double sigma, double epsilon, double delta, double q,
                int steps) {
  if (sigma >= 0.0) {
    double eps;
    if (sigma == 0.0) {
      eps = std::numeric_limits<double>::infinity();
    } else {
      eps = accountant::compose_and_convert(
          accountant::rdp_subsampled_gaussian(sigma > 0 ? q : q, sigma,
                                              accountant::default_orders()),
          steps, delta);
    }
    std::cout << "epsilon=" << (std::isinf(eps) ? "inf" : std::to_string(eps))
              << "\n"
              << "delta=" << delta << "\nsigma=" << sigma << "\nq=" << q
              << "\nsteps=" << steps << "\n";
    return kOk;
  }
  const double s = accountant::calibrate_sigma({epsilon, delta}, q, steps);
  std::cout << "sigma=" << s << "\nepsilon=" << epsilon << "\ndelta=" << delta
            << "\nq=" << q << "\nsteps=" << steps << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DP-Wavelet coarse-to-fine private image generation"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> sets;

  // synth-data
  auto* synth_cmd = app.add_subcommand("synth-data", "generate a toy corpus");
  std::string out_dir, style = "public";
  int classes = 4, per_class = 16, image_size = 16, channels = 1;
  uint64_t seed = 0;
  synth_cmd->add_option("--out", out_dir)->required();
  synth_cmd->add_option("--classes", classes);
  synth_cmd->add_option("--per-class", per_class);
  synth_cmd->add_option("--seed", seed);
  synth_cmd->add_option("--style", style)->check(CLI::IsMember({"public", "private"}));
  synth_cmd->add_option("--image-size", image_size);
  synth_cmd->add_option("--channels", channels);

  auto* pretrain_cmd = app.add_subcommand("pretrain", "public pretraining");
  auto* finetune_cmd =
      app.add_subcommand("finetune-dp", "stage-1 DP coarse finetuning");
  auto* sample_cmd = app.add_subcommand("sample", "stage-2 generation");
  auto* eval_cmd = app.add_subcommand("eval", "metric report");
  for (CLI::App* sub : {pretrain_cmd, finetune_cmd, sample_cmd, eval_cmd}) {
    sub->add_option("--config", config_path, "key=value config file");
    sub->add_option("--set,-D", sets, "config overrides, key=value");
  }

  auto* account_cmd = app.add_subcommand("account", "privacy accounting");
  double a_sigma = -1.0, a_epsilon = -1.0, a_delta = 1e-5, a_q = 1.0;
  int a_steps = 1;
  account_cmd->add_option("--sigma", a_sigma, "report epsilon for this sigma");
  account_cmd->add_option("--epsilon", a_epsilon, "calibrate sigma for this epsilon");
  account_cmd->add_option("--delta", a_delta);
  account_cmd->add_option("--q", a_q);
  account_cmd->add_option("--steps", a_steps);

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth_cmd->parsed())
      return cmd_synth_data(out_dir, classes, per_class, seed, style,
                            image_size, channels);
    if (account_cmd->parsed()) {
      if (a_sigma < 0.0 && a_epsilon <= 0.0)
        throw ConfigError("account: give --sigma or --epsilon");
      return cmd_account(a_sigma, a_epsilon, a_delta, a_q, a_steps);
    }
    const config::KeyValueConfig cfg = resolve_config(config_path, sets);
    if (pretrain_cmd->parsed()) return cmd_pretrain(cfg);
    if (finetune_cmd->parsed()) return cmd_finetune_dp(cfg);
    if (sample_cmd->parsed()) return cmd_sample(cfg);
    if (eval_cmd->parsed()) return cmd_eval(cfg);
    return kConfigError;
  } catch (const CalibrationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kPrivacyInfeasible;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const ArgumentError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDataError;
  } catch (const CodebookError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDataError;
  } catch (const StatisticsError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDataError;
  } catch (const ResolutionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDataError;
  } catch (const DimensionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDataError;
  } catch (const CorruptSequenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDataError;
  } catch (const Error& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kInternalError;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kInternalError;
  }
}
