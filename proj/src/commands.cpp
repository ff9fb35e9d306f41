#include "sandwich/commands.h"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>

#include "sandwich/checkpoint.h"
#include "sandwich/corpus.h"
#include "sandwich/errors.h"
#include "sandwich/hcgan.h"
#include "sandwich/hcvae.h"
#include "sandwich/lcvae.h"
#include "sandwich/midi.h"
#include "sandwich/nn.h"
#include "sandwich/store.h"

namespace sandwich {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

bool is_midi(const fs::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".mid" || ext == ".midi";
}

std::vector<fs::path> midi_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir))
    if (entry.is_regular_file() && is_midi(entry.path())) files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  return files;
}

std::string read_text(const fs::path& path) {
  const auto bytes = read_file(path);
  return {bytes.begin(), bytes.end()};
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::vector<std::string> lines;
  std::istringstream in(read_text(path));
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  return lines;
}

FlnDictionary load_dictionary(const fs::path& data_dir) { return FlnDictionary::load(data_dir / "dictionary.txt"); }

std::vector<SongTensor> load_data_songs(const fs::path& data_dir, const FlnDictionary& dict) {
  return load_songs(data_dir / "songs.store", data_dir / "labels.txt", dict.class_count());
}

torch::Tensor phrase_labels(std::span<const Phrase> phrases, const FlnDictionary& dict) {
  std::vector<std::int64_t> labels;
  labels.reserve(phrases.size());
  for (const auto& p : phrases) labels.push_back(dict.label(p));
  return torch::tensor(labels, torch::kInt64);
}

std::optional<Checkpoint> load_if_present(const fs::path& path) {
  if (!fs::exists(path)) return std::nullopt;
  return Checkpoint::load(path);
}

Checkpoint require_checkpoint(const fs::path& path, const std::string& task, const std::string& needed_by) {
  if (!fs::exists(path))
    throw MissingPretrainError(needed_by + " needs a trained " + task + " checkpoint at " + path.string());
  auto ck = Checkpoint::load(path);
  ck.expect_kind(task);
  return ck;
}

class Log {
 public:
  Log(const fs::path& path, bool append, bool echo)
      : out_(path, append ? std::ios::app : std::ios::trunc), echo_(echo) {
    if (!out_) throw IoError("cannot write " + path.string());
  }
  void line(const std::string& text) {
    out_ << text << '\n';
    out_.flush();
    if (echo_) std::cerr << text << '\n';
  }

 private:
  std::ofstream out_;
  bool echo_;
};

void save_atomically(const Checkpoint& ck, const fs::path& path) {
  const auto tmp = fs::path(path.string() + ".tmp");
  ck.save(tmp);
  fs::rename(tmp, path);
}

TrainReport train_lcvae_task(const RunConfig& config, const fs::path& data_dir, const fs::path& run_dir, bool resume,
                             bool verbose) {
  const auto dict = load_dictionary(data_dir);
  const auto phrases = load_phrases(data_dir / "phrases.store");
  if (phrases.empty()) throw EmptyInputError("no phrases in " + data_dir.string());
  auto cfg = config.lcvae;
  cfg.class_count = dict.class_count();
  cfg.seed = config.require_seed();
  cfg.validate();

  LcvaeTrainer trainer(make_lcvae(cfg), phrases_to_tensor(phrases), phrase_labels(phrases, dict));
  const auto path = run_dir / "lcvae.ckpt";
  if (resume) {
    if (auto ck = load_if_present(path)) {
      ck->expect_kind("lcvae");
      if (ck->meta("dictionary_hash") != dict.hash()) throw ProvenanceError("lcvae checkpoint is for another dictionary");
      trainer.restore(*ck);
    }
  }
  Log log(run_dir / "lcvae.log", resume && trainer.epoch() > 0, verbose);
  TrainReport report;
  report.checkpoint = path;
  const auto start = Clock::now();
  auto save = [&] {
    auto ck = lcvae_checkpoint(trainer.model(), dict.hash());
    trainer.save(ck);
    save_atomically(ck, path);
  };
  train_lcvae(trainer, {[&](const EpochStats& s) {
                log.line(format_epoch_line(s));
                report.final_loss = s.total;
                save();
              }});
  if (trainer.epoch() == 0 || !fs::exists(path)) save();
  report.iterations = trainer.epoch();
  report.seconds = seconds_since(start);
  return report;
}

TrainReport train_hcvae_task(const RunConfig& config, const fs::path& data_dir, const fs::path& run_dir, bool resume,
                             bool verbose) {
  const auto lcvae_ck = require_checkpoint(run_dir / "lcvae.ckpt", "lcvae", "hcvae training");
  const auto dict = load_dictionary(data_dir);
  if (lcvae_ck.meta("dictionary_hash") != dict.hash())
    throw ProvenanceError("lcvae checkpoint was trained with another dictionary");
  const auto songs = load_data_songs(data_dir, dict);
  if (songs.empty()) throw EmptyInputError("no songs in " + data_dir.string());
  auto cfg = config.gvae;
  cfg.seed = config.require_seed();
  cfg.validate();

  auto lcvae = lcvae_from_checkpoint(lcvae_ck);
  auto gvae = make_gvae(cfg, lcvae->config.latent_dim);
  HcvaeTrainer trainer(lcvae, gvae, songs_to_tensor(songs), song_labels_to_tensor(songs));
  const auto path = run_dir / "hcvae.ckpt";
  if (resume) {
    if (auto ck = load_if_present(path)) {
      ck->expect_kind("hcvae");
      gvae_from_checkpoint(*ck, lcvae);  // provenance check
      trainer.restore(*ck);
    }
  }
  Log log(run_dir / "hcvae.log", resume && trainer.epoch() > 0, verbose);
  TrainReport report;
  report.checkpoint = path;
  const auto start = Clock::now();
  auto save = [&] {
    auto ck = hcvae_checkpoint(gvae, lcvae);
    trainer.save(ck);
    save_atomically(ck, path);
  };
  train_hcvae(trainer, {[&](const EpochStats& s) {
                log.line(format_epoch_line(s));
                report.final_loss = s.total;
                save();
              }});
  if (!fs::exists(path)) save();
  report.iterations = trainer.epoch();
  report.seconds = seconds_since(start);
  return report;
}

TrainReport train_hcgan_task(const RunConfig& config, const fs::path& data_dir, const fs::path& run_dir, bool resume,
                             bool verbose) {
  const auto hcvae_path = run_dir / "hcvae.ckpt";
  const auto lcvae_ck = require_checkpoint(run_dir / "lcvae.ckpt", "lcvae", "hcgan training");
  const auto hcvae_ck = require_checkpoint(hcvae_path, "hcvae", "hcgan training");
  const auto dict = load_dictionary(data_dir);
  const auto songs = load_data_songs(data_dir, dict);
  if (songs.empty()) throw EmptyInputError("no songs in " + data_dir.string());
  auto cfg = config.gan;
  cfg.seed = config.require_seed();
  cfg.validate();

  auto trainer = make_hcgan_trainer(&lcvae_ck, &hcvae_ck, songs_to_tensor(songs), song_labels_to_tensor(songs), cfg);
  const auto path = run_dir / "hcgan.ckpt";
  const auto hcvae_hash = hcvae_ck.hash();
  if (resume) {
    if (auto ck = load_if_present(path)) {
      ck->expect_kind("hcgan");
      if (ck->meta("hcvae_hash") != hcvae_hash) throw ProvenanceError("hcgan checkpoint comes from another hcvae run");
      trainer.restore(*ck);
    }
  }
  Log log(run_dir / "hcgan.log", resume && trainer.steps_done() > 0, verbose);
  TrainReport report;
  report.checkpoint = path;
  const auto start = Clock::now();
  auto save = [&] {
    auto ck = hcgan_checkpoint(trainer, hcvae_hash);
    trainer.save(ck);
    save_atomically(ck, path);
  };
  train_hcgan(trainer, {[&](const GanStepLog& s) {
                log.line(format_gan_line(s));
                report.final_loss = s.generator_loss;
                if (s.step % 50 == 0 || s.step == cfg.steps) save();
              }});
  if (!fs::exists(path)) save();
  report.iterations = trainer.steps_done();
  report.seconds = seconds_since(start);
  return report;
}

TrainReport train_fln_seq_task(const RunConfig& config, const fs::path& data_dir, const fs::path& run_dir,
                               bool verbose) {
  const auto dict = load_dictionary(data_dir);
  const auto seqs = load_label_sequences(data_dir / "labels.txt", dict.class_count());
  if (seqs.empty()) throw EmptyInputError("no label sequences in " + data_dir.string());
  auto cfg = config.fln_seq;
  cfg.class_count = dict.class_count();
  cfg.seed = config.require_seed();
  cfg.validate();

  std::vector<std::int64_t> flat;
  for (const auto& s : seqs) flat.insert(flat.end(), s.begin(), s.end());
  const auto labels = torch::tensor(flat, torch::kInt64).view({static_cast<std::int64_t>(seqs.size()), kSongPhrases});
  auto model = make_fln_seq_vae(cfg);
  Log log(run_dir / "fln_seq.log", false, verbose);
  TrainReport report;
  const auto start = Clock::now();
  const auto history = train_fln_seq_vae(model, labels, {[&](const EpochStats& s) { log.line(format_epoch_line(s)); }});
  report.checkpoint = run_dir / "fln_seq.ckpt";
  auto ck = fln_seq_checkpoint(model);
  ck.set_meta("dictionary_hash", dict.hash());
  save_atomically(ck, report.checkpoint);
  report.final_loss = history.empty() ? 0.0 : history.back().total;
  report.iterations = static_cast<int>(history.size());
  report.seconds = seconds_since(start);
  return report;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

fs::path sibling(const fs::path& checkpoint, const std::string& name) { return checkpoint.parent_path() / name; }

PreprocessReport cmd_preprocess(const fs::path& midi_dir, const fs::path& out_dir, const RunConfig& config) {
  const auto files = midi_files(midi_dir);
  if (files.empty()) throw NoInputError("no .mid or .midi files under " + midi_dir.string());

  PreprocessReport report;
  report.files = static_cast<int>(files.size());
  std::vector<Phrase> all_phrases;
  std::vector<std::pair<std::string, std::vector<Phrase>>> per_file;
  for (const auto& file : files) {
    const auto name = fs::relative(file, midi_dir).generic_string();
    try {
      auto phrases = split_phrases(to_piano_roll(normalize(load_midi(file))));
      all_phrases.insert(all_phrases.end(), phrases.begin(), phrases.end());
      per_file.emplace_back(name, std::move(phrases));
    } catch (const Error& e) {
      report.errors.push_back(name + ": " + e.what());
    }
  }
  report.phrases = static_cast<int>(all_phrases.size());
  const auto dict = FlnDictionary::build(all_phrases, config.min_count);
  report.dictionary_size = dict.size();

  std::vector<SongTensor> songs;
  std::string names;
  for (const auto& [name, phrases] : per_file) {
    if (static_cast<int>(phrases.size()) < kSongPhrases) {
      ++report.too_short;
      continue;
    }
    songs.push_back(build_song_tensor(phrases, dict));
    names += name + "\n";
  }
  report.songs = static_cast<int>(songs.size());

  fs::create_directories(out_dir);
  save_phrases(out_dir / "phrases.store", all_phrases);
  save_song_grids(out_dir / "songs.store", songs);
  std::vector<std::vector<int>> labels;
  for (const auto& s : songs) labels.push_back(s.labels);
  save_label_sequences(out_dir / "labels.txt", labels);
  write_text(out_dir / "names.txt", names);
  dict.save(out_dir / "dictionary.txt");

  std::string manifest;
  manifest += "files\t" + std::to_string(report.files) + "\n";
  manifest += "parsed\t" + std::to_string(per_file.size()) + "\n";
  manifest += "phrases\t" + std::to_string(report.phrases) + "\n";
  manifest += "songs\t" + std::to_string(report.songs) + "\n";
  manifest += "too_short\t" + std::to_string(report.too_short) + "\n";
  manifest += "dictionary_size\t" + std::to_string(report.dictionary_size) + "\n";
  manifest += "min_count\t" + std::to_string(config.min_count) + "\n";
  manifest += "dictionary_hash\t" + dict.hash() + "\n";
  for (const auto& e : report.errors) manifest += "rejected\t" + e + "\n";
  write_text(out_dir / "manifest.txt", manifest);
  return report;
}

Task parse_task(const std::string& name) {
  if (name == "lcvae") return Task::Lcvae;
  if (name == "hcvae") return Task::Hcvae;
  if (name == "hcgan") return Task::Hcgan;
  if (name == "fln-seq") return Task::FlnSeq;
  throw UsageError("unknown task '" + name + "' (lcvae, hcvae, hcgan, fln-seq)");
}

const char* task_name(Task task) {
  switch (task) {
    case Task::Lcvae: return "lcvae";
    case Task::Hcvae: return "hcvae";
    case Task::Hcgan: return "hcgan";
    case Task::FlnSeq: return "fln-seq";
  }
  return "?";
}

TrainReport cmd_train(Task task, const RunConfig& config, const fs::path& data_dir, const fs::path& run_dir,
                      bool resume, bool verbose) {
  config.require_seed();
  fs::create_directories(run_dir);
  write_text(run_dir / (std::string(task_name(task)) + ".cfg"), config.to_text());
  switch (task) {
    case Task::Lcvae: return train_lcvae_task(config, data_dir, run_dir, resume, verbose);
    case Task::Hcvae: return train_hcvae_task(config, data_dir, run_dir, resume, verbose);
    case Task::Hcgan: return train_hcgan_task(config, data_dir, run_dir, resume, verbose);
    case Task::FlnSeq: return train_fln_seq_task(config, data_dir, run_dir, verbose);
  }
  throw UsageError("unknown task");
}

FlnSource parse_fln_source(const std::string& name) {
  if (name == "file") return FlnSource::File;
  if (name == "model") return FlnSource::Model;
  if (name == "dataset" || name == "dataset-sample") return FlnSource::Dataset;
  throw UsageError("unknown fln source '" + name + "' (file, model, dataset)");
}

std::vector<fs::path> cmd_generate(const GenerateOptions& opts, const RunConfig& config) {
  const auto seed = config.require_seed();
  if (opts.count <= 0) throw UsageError("count must be positive");
  const auto ck = Checkpoint::load(opts.checkpoint);
  Lcvae lcvae{nullptr};
  Gvae gvae{nullptr};
  if (ck.kind() == "hcgan") {
    auto models = hcgan_from_checkpoint(ck);
    lcvae = models.lcvae;
    gvae = models.gvae;
  } else if (ck.kind() == "hcvae") {
    const auto lcvae_path = opts.lcvae.empty() ? sibling(opts.checkpoint, "lcvae.ckpt") : opts.lcvae;
    lcvae = lcvae_from_checkpoint(require_checkpoint(lcvae_path, "lcvae", "generation from an hcvae checkpoint"));
    gvae = gvae_from_checkpoint(ck, lcvae);
  } else {
    throw ProvenanceError("generate needs an hcvae or hcgan checkpoint, got '" + ck.kind() + "'");
  }
  lcvae->eval();
  gvae->eval();
  const auto dict = load_dictionary(opts.data_dir);
  if (dict.class_count() != lcvae->config.class_count)
    throw ProvenanceError("dictionary has " + std::to_string(dict.class_count()) + " classes, model expects " +
                          std::to_string(lcvae->config.class_count));

  std::vector<std::vector<int>> label_seqs;
  switch (opts.source) {
    case FlnSource::File: {
      label_seqs = load_label_sequences(opts.labels_file, dict.class_count());
      if (static_cast<int>(label_seqs.size()) < opts.count)
        throw RangeError("label file has " + std::to_string(label_seqs.size()) + " sequences, " +
                         std::to_string(opts.count) + " requested");
      label_seqs.resize(static_cast<std::size_t>(opts.count));
      break;
    }
    case FlnSource::Model: {
      const auto path = opts.fln_model.empty() ? sibling(opts.checkpoint, "fln_seq.ckpt") : opts.fln_model;
      const auto model_ck = require_checkpoint(path, "fln_seq", "generation with model labels");
      auto model = fln_seq_from_checkpoint(model_ck);
      if (model->config.class_count != dict.class_count())
        throw ProvenanceError("fln sequence model was trained with another dictionary");
      for (int i = 0; i < opts.count; ++i) {
        Rng rng(derive_seed(seed, 0xF10000 + static_cast<std::uint64_t>(i)));
        label_seqs.push_back(sample_fln_sequence(model, rng));
      }
      break;
    }
    case FlnSource::Dataset: {
      const auto all = load_label_sequences(opts.data_dir / "labels.txt", dict.class_count());
      if (all.empty()) throw EmptyInputError("no label sequences in " + opts.data_dir.string());
      Rng rng(derive_seed(seed, 0xDA7A));
      for (int i = 0; i < opts.count; ++i)
        label_seqs.push_back(all[static_cast<std::size_t>(rng.engine()() % all.size())]);
      break;
    }
  }

  fs::create_directories(opts.out_dir);
  std::vector<fs::path> paths;
  std::vector<SongTensor> songs;
  for (int i = 0; i < opts.count; ++i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    auto song = generate_song(lcvae, gvae, label_seqs[static_cast<std::size_t>(i)], rng);
    char name[32];
    std::snprintf(name, sizeof name, "gen_%03d", i);
    const auto mid = opts.out_dir / (std::string(name) + ".mid");
    export_midi(song, mid);
    save_label_sequences(opts.out_dir / (std::string(name) + ".labels"), {song.labels});
    paths.push_back(mid);
    songs.push_back(std::move(song));
  }
  save_song_grids(opts.out_dir / "songs.store", songs);
  save_label_sequences(opts.out_dir / "conditioning_labels.txt", label_seqs);
  dict.save(opts.out_dir / "dictionary.txt");
  return paths;
}

MetricsReport evaluate_dir(const fs::path& dir, const MetricsOptions& opts) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<PianoRoll> rolls;
  std::vector<std::string> names;
  std::optional<double> fln;
  if (fs::exists(dir / "songs.store")) {
    rolls = load_song_grids(dir / "songs.store");
    if (fs::exists(dir / "names.txt")) names = read_lines(dir / "names.txt");
    if (fs::exists(dir / "conditioning_labels.txt") && fs::exists(dir / "dictionary.txt") && !rolls.empty()) {
      const auto dict = load_dictionary(dir);
      const auto seqs = load_label_sequences(dir / "conditioning_labels.txt", dict.class_count());
      if (seqs.size() != rolls.size()) throw ShapeError("conditioning labels do not match the song count");
      std::vector<Phrase> phrases;
      std::vector<int> labels;
      for (std::size_t i = 0; i < rolls.size(); ++i) {
        const auto split = split_phrases(rolls[i]);
        for (std::size_t j = 0; j < split.size(); ++j) {
          phrases.push_back(split[j]);
          labels.push_back(seqs[i][j]);
        }
      }
      try {
        fln = fln_accuracy(phrases, labels, dict);
      } catch (const EmptyInputError&) {
      }
    }
  } else {
    for (const auto& file : midi_files(dir)) {
      rolls.push_back(to_piano_roll(normalize(load_midi(file))));
      names.push_back(fs::relative(file, dir).generic_string());
    }
  }
  if (rolls.empty()) throw EmptyInputError("no songs to evaluate in " + dir.string());
  if (names.size() != rolls.size()) names.clear();
  auto report = evaluate(rolls, opts, names);
  report.fln_accuracy_percent = fln;
  return report;
}

std::string cmd_evaluate(const fs::path& dir, const MetricsOptions& opts, const std::optional<fs::path>& out_dir,
                         const std::optional<fs::path>& compare) {
  const auto report = evaluate_dir(dir, opts);
  std::string text = "# " + dir.generic_string() + "\n" + report.to_table();
  std::string kv = report.to_key_values();
  if (compare) {
    const auto other = evaluate_dir(*compare, opts);
    text += "\n# " + compare->generic_string() + "\n" + other.to_table();
    std::string prefixed;
    std::istringstream in(other.to_key_values());
    for (std::string line; std::getline(in, line);) prefixed += "compare." + line + "\n";
    kv += prefixed;
  }
  if (out_dir) {
    fs::create_directories(*out_dir);
    write_text(*out_dir / "report.txt", text);
    write_text(*out_dir / "report.kv", kv);
  }
  return text;
}

std::vector<RepeatReport> repeated_fragment_diffs(const fs::path& lcvae_checkpoint, const fs::path& data_dir,
                                                  int songs) {
  const auto ck = require_checkpoint(lcvae_checkpoint, "lcvae", "latent inspection");
  auto lcvae = lcvae_from_checkpoint(ck);
  lcvae->eval();
  const auto dict = load_dictionary(data_dir);
  const auto data = load_data_songs(data_dir, dict);
  std::vector<RepeatReport> out;
  for (int s = 0; s < std::min<int>(songs, static_cast<int>(data.size())); ++s) {
    const auto& phrases = data[static_cast<std::size_t>(s)].phrases;
    for (int a = 0; a < kSongPhrases; ++a)
      for (int b = a + 1; b < kSongPhrases; ++b)
        if (phrases[a] == phrases[b] && !extract_fln(phrases[a]).empty())
          out.push_back({s, a, b, latent_diff(phrases[a], phrases[b], lcvae, dict)});
  }
  return out;
}

std::string cmd_inspect_latent(const fs::path& lcvae_checkpoint, const fs::path& data_dir,
                               const std::optional<std::array<int, 3>>& pair) {
  std::string out;
  if (pair) {
    const auto ck = require_checkpoint(lcvae_checkpoint, "lcvae", "latent inspection");
    auto lcvae = lcvae_from_checkpoint(ck);
    lcvae->eval();
    const auto dict = load_dictionary(data_dir);
    const auto data = load_data_songs(data_dir, dict);
    const auto [s, a, b] = *pair;
    if (s < 0 || s >= static_cast<int>(data.size()) || a < 0 || a >= kSongPhrases || b < 0 || b >= kSongPhrases)
      throw RangeError("song or phrase index out of range");
    const auto& phrases = data[static_cast<std::size_t>(s)].phrases;
    const auto r = latent_diff(phrases[a], phrases[b], lcvae, dict);
    out += "song\t" + std::to_string(s) + "\nphrases\t" + std::to_string(a) + "\t" + std::to_string(b) + "\n";
    out += "identical\t" + std::string(phrases[a] == phrases[b] ? "yes" : "no") + "\n";
    out += "max\t" + format_double(r.max) + "\nmean\t" + format_double(r.mean) + "\n";
    for (std::size_t i = 0; i < r.diffs.size(); ++i) out += "dim" + std::to_string(i) + "\t" + format_double(r.diffs[i]) + "\n";
    return out;
  }
  const auto reports = repeated_fragment_diffs(lcvae_checkpoint, data_dir, 10);
  double worst = 0;
  out += "song\tphrase_a\tphrase_b\tmax_diff\tmean_diff\n";
  for (const auto& r : reports) {
    out += std::to_string(r.song) + "\t" + std::to_string(r.phrase_a) + "\t" + std::to_string(r.phrase_b) + "\t" +
           format_double(r.diff.max) + "\t" + format_double(r.diff.mean) + "\n";
    worst = std::max(worst, r.diff.max);
  }
  out += "pairs\t" + std::to_string(reports.size()) + "\nworst_max\t" + format_double(worst) + "\n";
  return out;
}

}  // namespace sandwich
