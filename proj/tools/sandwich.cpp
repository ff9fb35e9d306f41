// sandwich: preprocess, train, generate, evaluate, inspect-latent, synth.
// Exit codes: 0 success, 1 usage error, 2 data error, 3 training divergence.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

#include "sandwich/commands.h"
#include "sandwich/errors.h"

namespace {

using namespace sandwich;

struct ConfigArgs {
  std::string file;
  std::vector<std::string> sets;

  void add_to(CLI::App* app) {
    app->add_option("--config", file, "key = value config file");
    app->add_option("--set", sets, "override one key, key=value (repeatable)");
  }

  RunConfig load() const {
    auto cfg = file.empty() ? RunConfig{} : RunConfig::load(file);
    for (const auto& s : sets) cfg.set_assignment(s);
    return cfg;
  }
};

int run(int argc, char** argv) {
  CLI::App app{"Hierarchical VAE/GAN melody generation with first-and-last-note conditioning"};
  app.require_subcommand(1);

  ConfigArgs pre_cfg, train_cfg, gen_cfg, eval_cfg, show_cfg;

  auto* pre = app.add_subcommand("preprocess", "MIDI directory -> phrase/song stores and label dictionary");
  std::string pre_in, pre_out;
  pre->add_option("--midi", pre_in, "directory of .mid files")->required();
  pre->add_option("--out", pre_out, "output data directory")->required();
  pre_cfg.add_to(pre);

  auto* train = app.add_subcommand("train", "train one task: lcvae, hcvae, hcgan or fln-seq");
  std::string task, train_data, train_run;
  bool resume = false, verbose = false;
  train->add_option("task", task, "lcvae | hcvae | hcgan | fln-seq")->required();
  train->add_option("--data", train_data, "preprocessed data directory")->required();
  train->add_option("--run", train_run, "run directory for checkpoints and logs")->required();
  train->add_flag("--resume", resume, "continue from the task's checkpoint in the run directory");
  train->add_flag("-v,--verbose", verbose, "echo log lines to stderr");
  train_cfg.add_to(train);

  auto* gen = app.add_subcommand("generate", "sample songs from an hcvae or hcgan checkpoint");
  GenerateOptions gopts;
  std::string source = "dataset";
  std::string g_ck, g_lcvae, g_data, g_labels, g_model, g_out;
  gen->add_option("--checkpoint", g_ck, "hcvae.ckpt or hcgan.ckpt")->required();
  gen->add_option("--data", g_data, "preprocessed data directory (dictionary, dataset labels)")->required();
  gen->add_option("--out", g_out, "output directory")->required();
  gen->add_option("-n,--count", gopts.count, "number of songs");
  gen->add_option("--source", source, "label source: file | model | dataset");
  gen->add_option("--labels", g_labels, "label file for --source file (17 labels per line)");
  gen->add_option("--fln-model", g_model, "fln_seq.ckpt for --source model");
  gen->add_option("--lcvae", g_lcvae, "lcvae.ckpt for an hcvae checkpoint");
  gen_cfg.add_to(gen);

  auto* eval = app.add_subcommand("evaluate", "EB/UPC/QN/IT (and FLN accuracy) for a directory");
  std::string e_dir, e_out, e_cmp;
  eval->add_option("dir", e_dir, "data, generated or MIDI directory")->required();
  eval->add_option("--out", e_out, "write report.txt and report.kv here");
  eval->add_option("--compare", e_cmp, "second directory reported alongside");
  eval_cfg.add_to(eval);

  auto* inspect = app.add_subcommand("inspect-latent", "cm-subtracted latent differences of phrase pairs");
  std::string i_ck, i_data;
  std::vector<int> i_pair;
  inspect->add_option("--checkpoint", i_ck, "lcvae.ckpt")->required();
  inspect->add_option("--data", i_data, "preprocessed data directory")->required();
  inspect->add_option("--pair", i_pair, "song phrase_a phrase_b (default: all repeated fragments)")->expected(3);

  auto* synth = app.add_subcommand("synth", "write the deterministic synthetic MIDI corpus");
  SynthOptions sopts;
  std::string s_out;
  bool no_transpose = false;
  synth->add_option("--out", s_out, "output directory")->required();
  synth->add_option("--songs", sopts.songs, "number of songs");
  synth->add_option("--seed", sopts.seed, "seed");
  synth->add_flag("--no-transpose", no_transpose, "keep every song in C major");

  auto* show = app.add_subcommand("config", "print every config key with its value and documentation");
  show_cfg.add_to(show);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  if (*pre) {
    const auto report = cmd_preprocess(pre_in, pre_out, pre_cfg.load());
    std::printf("files %d, phrases %d, songs %d, too short %d, dictionary K=%d\n", report.files, report.phrases,
                report.songs, report.too_short, report.dictionary_size);
    for (const auto& e : report.errors) std::fprintf(stderr, "rejected %s\n", e.c_str());
    return report.errors.empty() ? 0 : 2;
  }
  if (*train) {
    const auto report = cmd_train(parse_task(task), train_cfg.load(), train_data, train_run, resume, verbose);
    std::printf("%s: %d iterations, final loss %.6f, %.1f s -> %s\n", task.c_str(), report.iterations,
                report.final_loss, report.seconds, report.checkpoint.string().c_str());
    return 0;
  }
  if (*gen) {
    gopts.checkpoint = g_ck;
    gopts.lcvae = g_lcvae;
    gopts.data_dir = g_data;
    gopts.labels_file = g_labels;
    gopts.fln_model = g_model;
    gopts.out_dir = g_out;
    gopts.source = parse_fln_source(source);
    if (gopts.source == FlnSource::File && g_labels.empty()) throw UsageError("--source file needs --labels");
    const auto paths = cmd_generate(gopts, gen_cfg.load());
    for (const auto& p : paths) std::printf("%s\n", p.string().c_str());
    return 0;
  }
  if (*eval) {
    const auto cfg = eval_cfg.load();
    std::optional<fs::path> out, cmp;
    if (!e_out.empty()) out = e_out;
    if (!e_cmp.empty()) cmp = e_cmp;
    std::fputs(cmd_evaluate(e_dir, cfg.metrics, out, cmp).c_str(), stdout);
    return 0;
  }
  if (*inspect) {
    std::optional<std::array<int, 3>> pair;
    if (!i_pair.empty()) pair = std::array<int, 3>{i_pair[0], i_pair[1], i_pair[2]};
    std::fputs(cmd_inspect_latent(i_ck, i_data, pair).c_str(), stdout);
    return 0;
  }
  if (*synth) {
    sopts.transpose = !no_transpose;
    const auto paths = write_synthetic_corpus(s_out, sopts);
    std::printf("%zu files -> %s\n", paths.size(), s_out.c_str());
    return 0;
  }
  if (*show) {
    std::fputs(show_cfg.load().to_text().c_str(), stdout);
    return 0;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const sandwich::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
