#pragma once

#include "fibnet/random.hpp"
#include "fibnet/tensor.hpp"
#include "fibnet/train.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace fibnet {

inline constexpr std::size_t kImageSide = 224;

class ImageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DatasetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// 8-bit interleaved pixels, row-major (height, width, channels).
struct Image {
    std::size_t width = 0;
    std::size_t height = 0;
    std::size_t channels = 0;
    std::vector<std::uint8_t> pixels;

    std::uint8_t &at(std::size_t y, std::size_t x, std::size_t c) { return pixels[(y * width + x) * channels + c]; }
    [[nodiscard]] std::uint8_t at(std::size_t y, std::size_t x, std::size_t c) const { return pixels[(y * width + x) * channels + c]; }
};

// PNG or JPEG, chosen by file signature. Errors carry the path.
Image load_image(const std::filesystem::path &path);
void save_png(const std::filesystem::path &path, const Image &img);

// Bilinear resampling with half-pixel centers (corners not aligned) and
// edge clamping. x is (n, h, w, c); equal sizes return x unchanged.
Tensor resize_bilinear(const Tensor &x, std::size_t out_h, std::size_t out_w);

// Image -> (1, side, side, 3) scaled to [0, 1]. Grayscale is replicated over
// three channels; an alpha channel is dropped.
Tensor to_sample(const Image &img, std::size_t side = kImageSide);

// Inverse of the [0, 1] scaling for a single (1, h, w, c) tensor.
Image to_image(const Tensor &x);

// ---------------------------------------------------------------------------
// Corpus indexing and splitting
// ---------------------------------------------------------------------------

enum class Split { train, val, test };

std::string to_string(Split s);
Split parse_split(const std::string &s);

struct Record {
    std::string path;  // relative to the corpus root, '/' separated
    std::size_t label = 0;
    Split split = Split::train;
    friend bool operator==(const Record &, const Record &) = default;
};

struct SkippedFile {
    std::string path;
    std::string reason;
};

struct ScanResult {
    std::filesystem::path root;
    std::vector<std::string> classes;  // sorted
    std::vector<Record> records;       // sorted by path
    std::vector<SkippedFile> skipped;
};

// root/<class>/<image files>. Files that are not PNG/JPEG by signature, or
// cannot be opened, go to the skip report.
ScanResult scan_dataset(const std::filesystem::path &root);

struct SplitRatios {
    double train = 0.6;
    double val = 0.2;
    double test = 0.2;
};

struct DatasetIndex {
    std::filesystem::path root;
    std::vector<std::string> classes;
    std::vector<Record> records;
    std::uint64_t seed = 0;

    [[nodiscard]] std::vector<Record> split(Split s) const;
};

// Per class: seeded shuffle, then round-half-up(test * n) to test,
// round-half-up(val * n) to val and the remainder to train.
DatasetIndex stratified_split(const std::vector<std::string> &classes, std::vector<Record> records, const SplitRatios &ratios,
                              std::uint64_t seed);

struct SplitCounts {
    std::size_t train = 0;
    std::size_t val = 0;
    std::size_t test = 0;
};

SplitCounts split_counts(std::size_t n, const SplitRatios &ratios);

// splits.csv: path,class,split
void write_splits_csv(std::ostream &os, const DatasetIndex &index);
DatasetIndex read_splits_csv(std::istream &is, const std::filesystem::path &root, std::uint64_t seed);

// Decodes files from a corpus on demand.
class ImageFileSource : public DataSource {
public:
    ImageFileSource(std::filesystem::path root, std::vector<Record> records, std::size_t side);

    [[nodiscard]] std::size_t size() const override { return records_.size(); }
    [[nodiscard]] std::size_t label(std::size_t i) const override { return records_.at(i).label; }
    [[nodiscard]] Tensor load(std::size_t i) const override;
    [[nodiscard]] const std::vector<Record> &records() const { return records_; }

private:
    std::filesystem::path root_;
    std::vector<Record> records_;
    std::size_t side_;
};

// ---------------------------------------------------------------------------
// Synthetic corpus: one constant colour per class plus brightness jitter and
// pixel noise. Classes are separable by their channel means.
// ---------------------------------------------------------------------------

inline constexpr std::size_t kSyntheticClasses = 4;
inline const std::array<std::string, kSyntheticClasses> kSyntheticClassNames{"blue", "green", "red", "yellow"};

Image synthetic_image(std::size_t cls, std::size_t side, Rng &rng);
InMemorySource make_synthetic_set(std::size_t per_class, std::size_t side, std::uint64_t seed);
// Writes root/<class>/<class>_NNN.png and returns the number of files.
std::size_t write_synthetic_corpus(const std::filesystem::path &root, std::size_t per_class, std::size_t side,
                                   std::uint64_t seed);

}  // namespace fibnet
