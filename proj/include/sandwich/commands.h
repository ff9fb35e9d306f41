/**
 * @file commands.h
 * @brief The subcommands of the `sandwich` tool as library calls.
 *
 * A preprocessed data directory holds:
 *   phrases.store   every phrase of every parseable file
 *   songs.store     the first 17 phrases of each song that has them
 *   labels.txt      one label sequence per song
 *   names.txt       source file per song
 *   dictionary.txt  the label dictionary
 *   manifest.txt    counts and rejected files
 *
 * A run directory holds lcvae.ckpt, hcvae.ckpt, hcgan.ckpt, fln_seq.ckpt and
 * a .log per task. Later tasks look for earlier checkpoints there.
 */
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sandwich/config.h"
#include "sandwich/synth.h"

namespace sandwich {

namespace fs = std::filesystem;

struct PreprocessReport {
  int files = 0;
  int phrases = 0;
  int songs = 0;
  int too_short = 0;
  int dictionary_size = 0;
  std::vector<std::string> errors;  ///< "file: message" for files that failed to parse
};

/// Throws NoInputError when the directory has no .mid/.midi files and
/// NoPairsError when nothing survives the threshold. Per-file failures are
/// collected, not thrown.
PreprocessReport cmd_preprocess(const fs::path& midi_dir, const fs::path& out_dir, const RunConfig& config);

enum class Task { Lcvae, Hcvae, Hcgan, FlnSeq };
Task parse_task(const std::string& name);
const char* task_name(Task task);

struct TrainReport {
  fs::path checkpoint;
  double final_loss = 0;
  int iterations = 0;  ///< epochs, or generator steps for hcgan
  double seconds = 0;
};

/// Trains one task into `run_dir`. With `resume` an existing checkpoint of
/// the same task continues from its saved epoch/step. Throws
/// MissingPretrainError when an earlier task's checkpoint is absent.
TrainReport cmd_train(Task task, const RunConfig& config, const fs::path& data_dir, const fs::path& run_dir,
                      bool resume = false, bool verbose = false);

enum class FlnSource { File, Model, Dataset };
FlnSource parse_fln_source(const std::string& name);

struct GenerateOptions {
  fs::path checkpoint;      ///< hcvae.ckpt or hcgan.ckpt
  fs::path lcvae;           ///< for hcvae checkpoints; default: lcvae.ckpt next to it
  fs::path data_dir;        ///< dictionary (and labels for the dataset source)
  FlnSource source = FlnSource::Dataset;
  fs::path labels_file;     ///< for FlnSource::File
  fs::path fln_model;       ///< for FlnSource::Model; default: fln_seq.ckpt next to the checkpoint
  int count = 1;
  fs::path out_dir;
};

/// Writes gen_NNN.mid and gen_NNN.labels per song plus songs.store,
/// conditioning_labels.txt and dictionary.txt. Throws RangeError on a
/// malformed label file.
std::vector<fs::path> cmd_generate(const GenerateOptions& opts, const RunConfig& config);

/// Piano rolls and optional FLN accuracy for a data, generated or MIDI
/// directory. Generated directories get FLN accuracy from their
/// conditioning labels.
MetricsReport evaluate_dir(const fs::path& dir, const MetricsOptions& opts);

/// Writes report.txt and report.kv to `out_dir` (when given) and returns the
/// printed text. `compare` adds a second set under the first.
std::string cmd_evaluate(const fs::path& dir, const MetricsOptions& opts, const std::optional<fs::path>& out_dir,
                         const std::optional<fs::path>& compare = std::nullopt);

struct RepeatReport {
  int song = 0;
  int phrase_a = 0;
  int phrase_b = 0;
  LatentDiffReport diff;
};

/// Every pair of identical non-empty phrases within the first `songs` songs.
std::vector<RepeatReport> repeated_fragment_diffs(const fs::path& lcvae_checkpoint, const fs::path& data_dir,
                                                  int songs);

/// Report for one phrase pair (song, a, b) or, when `pair` is empty, for all
/// repeated fragments in the first 10 songs.
std::string cmd_inspect_latent(const fs::path& lcvae_checkpoint, const fs::path& data_dir,
                               const std::optional<std::array<int, 3>>& pair);

/// Path of `name` inside the run directory of `checkpoint`.
fs::path sibling(const fs::path& checkpoint, const std::string& name);

}  // namespace sandwich
