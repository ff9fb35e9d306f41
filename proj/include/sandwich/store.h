/**
 * @file store.h
 * @brief On-disk containers for preprocessed grids and label sequences.
 *
 * Grid stack layout (little-endian, bit-exact on every platform):
 *   "MSW1" | u32 version (=1) | u32 ndim | u32 dim[ndim] | u8 cells, row-major
 */
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sandwich/piano_roll.h"

namespace sandwich {

struct ByteTensor {
  std::vector<std::uint32_t> shape;
  std::vector<std::uint8_t> data;

  std::size_t numel() const;
};

inline constexpr std::uint32_t kStoreVersion = 1;

std::vector<std::uint8_t> encode_store(const ByteTensor& tensor);
ByteTensor decode_store(std::span<const std::uint8_t> bytes);
void save_store(const std::filesystem::path& path, const ByteTensor& tensor);
ByteTensor load_store(const std::filesystem::path& path);

/// (N, 50, 128) stack.
void save_phrases(const std::filesystem::path& path, std::span<const Phrase> phrases);
std::vector<Phrase> load_phrases(const std::filesystem::path& path);

/// (N, 850, 128) stack; labels are stored separately.
void save_song_grids(const std::filesystem::path& path, std::span<const SongTensor> songs);
std::vector<PianoRoll> load_song_grids(const std::filesystem::path& path);

/// One sequence per line, integers separated by single spaces.
void save_label_sequences(const std::filesystem::path& path, const std::vector<std::vector<int>>& seqs);
/// Throws RangeError on non-integer tokens, labels outside [0, class_count)
/// or lines that do not hold exactly `length` labels (length 0 = any).
std::vector<std::vector<int>> load_label_sequences(const std::filesystem::path& path, int class_count,
                                                   int length = kSongPhrases);

/// Songs with labels from a grid store plus a label file.
std::vector<SongTensor> load_songs(const std::filesystem::path& grids, const std::filesystem::path& labels,
                                   int class_count);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace sandwich
