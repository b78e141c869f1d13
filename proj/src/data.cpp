#include "fibnet/data.hpp"

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <memory>
#include <ostream>
#include <sstream>
#include <tuple>

#include <jpeglib.h>
#include <png.h>

namespace fibnet {

namespace fs = std::filesystem;

namespace {

enum class Format { png, jpeg, unknown };

Format sniff(const fs::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ImageError("cannot open " + path.string());
    }
    unsigned char head[8] = {};
    in.read(reinterpret_cast<char *>(head), sizeof(head));
    const auto got = in.gcount();
    static constexpr unsigned char kPng[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    if (got == 8 && std::equal(head, head + 8, kPng)) {
        return Format::png;
    }
    if (got >= 3 && head[0] == 0xff && head[1] == 0xd8 && head[2] == 0xff) {
        return Format::jpeg;
    }
    return Format::unknown;
}

Image load_png(const fs::path &path) {
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    if (png_image_begin_read_from_file(&png, path.c_str()) == 0) {
        throw ImageError(path.string() + ": " + png.message);
    }
    const bool gray = (png.format & PNG_FORMAT_FLAG_COLOR) == 0;
    png.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    Image img;
    img.width = png.width;
    img.height = png.height;
    img.channels = gray ? 1 : 3;
    img.pixels.resize(PNG_IMAGE_SIZE(png));
    if (png_image_finish_read(&png, nullptr, img.pixels.data(), 0, nullptr) == 0) {
        const std::string msg = png.message;
        png_image_free(&png);
        throw ImageError(path.string() + ": " + msg);
    }
    return img;
}

struct JpegErrorManager {
    jpeg_error_mgr base;
    std::jmp_buf jump;
    char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
    auto *err = reinterpret_cast<JpegErrorManager *>(cinfo->err);
    (*cinfo->err->format_message)(cinfo, err->message);
    std::longjmp(err->jump, 1);
}

// Returns false with `message` filled on a libjpeg error. Only `out` (through
// the pointer) is written after setjmp.
bool decode_jpeg(FILE *file, Image *out, JpegErrorManager *err) {
    jpeg_decompress_struct cinfo{};
    cinfo.err = jpeg_std_error(&err->base);
    err->base.error_exit = jpeg_error_exit;
    if (setjmp(err->jump) != 0) {
        jpeg_destroy_decompress(&cinfo);
        return false;
    }
    jpeg_create_decompress(&cinfo);
    jpeg_stdio_src(&cinfo, file);
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = cinfo.jpeg_color_space == JCS_GRAYSCALE ? JCS_GRAYSCALE : JCS_RGB;
    jpeg_start_decompress(&cinfo);
    out->width = cinfo.output_width;
    out->height = cinfo.output_height;
    out->channels = static_cast<std::size_t>(cinfo.output_components);
    out->pixels.resize(out->width * out->height * out->channels);
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = out->pixels.data() + static_cast<std::size_t>(cinfo.output_scanline) * out->width * out->channels;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return true;
}

Image load_jpeg(const fs::path &path) {
    std::unique_ptr<FILE, int (*)(FILE *)> file(std::fopen(path.c_str(), "rb"), &std::fclose);
    if (!file) {
        throw ImageError("cannot open " + path.string());
    }
    Image img;
    JpegErrorManager err{};
    if (!decode_jpeg(file.get(), &img, &err)) {
        throw ImageError(path.string() + ": " + err.message);
    }
    return img;
}

bool has_image_extension(const fs::path &p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

std::size_t round_half_up(double x) { return static_cast<std::size_t>(std::floor(x + 0.5 + 1e-9)); }

}  // namespace

Image load_image(const fs::path &path) {
    switch (sniff(path)) {
    case Format::png:
        return load_png(path);
    case Format::jpeg:
        return load_jpeg(path);
    case Format::unknown:
        break;
    }
    throw ImageError(path.string() + ": not a PNG or JPEG file");
}

void save_png(const fs::path &path, const Image &img) {
    if (img.channels != 1 && img.channels != 3 && img.channels != 4) {
        throw ImageError(path.string() + ": cannot write " + std::to_string(img.channels) + "-channel PNG");
    }
    if (img.pixels.size() != img.width * img.height * img.channels) {
        throw ImageError(path.string() + ": pixel buffer does not match image size");
    }
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(img.width);
    png.height = static_cast<png_uint_32>(img.height);
    png.format = img.channels == 1 ? PNG_FORMAT_GRAY : img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_RGBA;
    if (png_image_write_to_file(&png, path.c_str(), 0, img.pixels.data(), 0, nullptr) == 0) {
        throw ImageError(path.string() + ": " + png.message);
    }
}

Tensor resize_bilinear(const Tensor &x, std::size_t out_h, std::size_t out_w) {
    const Shape s = x.shape();
    if (out_h == 0 || out_w == 0) {
        throw ShapeError("resize_bilinear: zero output size");
    }
    if (s.h == out_h && s.w == out_w) {
        return x;
    }
    const double sy = static_cast<double>(s.h) / static_cast<double>(out_h);
    const double sx = static_cast<double>(s.w) / static_cast<double>(out_w);
    struct Tap {
        std::size_t lo, hi;
        double frac;
    };
    auto taps = [](std::size_t out, std::size_t in, double scale) {
        std::vector<Tap> t(out);
        for (std::size_t o = 0; o < out; ++o) {
            const double src = std::clamp((static_cast<double>(o) + 0.5) * scale - 0.5, 0.0, static_cast<double>(in - 1));
            const auto lo = static_cast<std::size_t>(std::floor(src));
            t[o] = {lo, std::min(lo + 1, in - 1), src - static_cast<double>(lo)};
        }
        return t;
    };
    const auto ty = taps(out_h, s.h, sy);
    const auto tx = taps(out_w, s.w, sx);
    Tensor out(Shape{s.n, out_h, out_w, s.c});
    for (std::size_t n = 0; n < s.n; ++n) {
        for (std::size_t y = 0; y < out_h; ++y) {
            for (std::size_t xx = 0; xx < out_w; ++xx) {
                for (std::size_t c = 0; c < s.c; ++c) {
                    const double top = (1.0 - tx[xx].frac) * x(n, ty[y].lo, tx[xx].lo, c) + tx[xx].frac * x(n, ty[y].lo, tx[xx].hi, c);
                    const double bot = (1.0 - tx[xx].frac) * x(n, ty[y].hi, tx[xx].lo, c) + tx[xx].frac * x(n, ty[y].hi, tx[xx].hi, c);
                    out(n, y, xx, c) = static_cast<float>((1.0 - ty[y].frac) * top + ty[y].frac * bot);
                }
            }
        }
    }
    return out;
}

Tensor to_sample(const Image &img, std::size_t side) {
    if (img.width == 0 || img.height == 0 || img.channels == 0) {
        throw ImageError("to_sample: empty image");
    }
    const bool gray = img.channels < 3;
    Tensor raw(Shape{1, img.height, img.width, 3});
    for (std::size_t y = 0; y < img.height; ++y) {
        for (std::size_t x = 0; x < img.width; ++x) {
            for (std::size_t c = 0; c < 3; ++c) {
                raw(0, y, x, c) = static_cast<float>(img.at(y, x, gray ? 0 : c));
            }
        }
    }
    Tensor out = resize_bilinear(raw, side, side);
    for (auto &v : out.data()) {
        v = std::clamp(v / 255.0f, 0.0f, 1.0f);
    }
    return out;
}

Image to_image(const Tensor &x) {
    const Shape s = x.shape();
    if (s.n != 1) {
        throw ShapeError("to_image: expected a single image, got " + to_string(s));
    }
    Image img{s.w, s.h, s.c, std::vector<std::uint8_t>(s.h * s.w * s.c)};
    for (std::size_t i = 0; i < x.size(); ++i) {
        img.pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(x[i], 0.0f, 1.0f) * 255.0f));
    }
    return img;
}

std::string to_string(Split s) {
    switch (s) {
    case Split::train:
        return "train";
    case Split::val:
        return "val";
    case Split::test:
        return "test";
    }
    return "train";
}

Split parse_split(const std::string &s) {
    if (s == "train") {
        return Split::train;
    }
    if (s == "val") {
        return Split::val;
    }
    if (s == "test") {
        return Split::test;
    }
    throw DatasetError("unknown split '" + s + "' (expected train, val or test)");
}

ScanResult scan_dataset(const fs::path &root) {
    if (!fs::is_directory(root)) {
        throw DatasetError("dataset root " + root.string() + " is not a directory");
    }
    ScanResult r;
    r.root = root;
    for (const auto &entry : fs::directory_iterator(root)) {
        if (entry.is_directory()) {
            r.classes.push_back(entry.path().filename().string());
        }
    }
    std::sort(r.classes.begin(), r.classes.end());
    for (std::size_t label = 0; label < r.classes.size(); ++label) {
        for (const auto &entry : fs::recursive_directory_iterator(root / r.classes[label])) {
            if (!entry.is_regular_file()) {
                continue;
            }
            const std::string rel = fs::relative(entry.path(), root).generic_string();
            if (!has_image_extension(entry.path())) {
                r.skipped.push_back({rel, "not an image extension"});
                continue;
            }
            try {
                if (sniff(entry.path()) == Format::unknown) {
                    r.skipped.push_back({rel, "not a PNG or JPEG file"});
                    continue;
                }
            } catch (const ImageError &e) {
                r.skipped.push_back({rel, e.what()});
                continue;
            }
            r.records.push_back({rel, label, Split::train});
        }
    }
    if (r.records.empty()) {
        throw DatasetError("dataset root " + root.string() + " contains no images in class subdirectories");
    }
    std::sort(r.records.begin(), r.records.end(), [](const Record &a, const Record &b) { return a.path < b.path; });
    return r;
}

std::vector<Record> DatasetIndex::split(Split s) const {
    std::vector<Record> out;
    std::copy_if(records.begin(), records.end(), std::back_inserter(out), [s](const Record &r) { return r.split == s; });
    return out;
}

SplitCounts split_counts(std::size_t n, const SplitRatios &ratios) {
    SplitCounts c;
    c.test = round_half_up(ratios.test * static_cast<double>(n));
    c.val = round_half_up(ratios.val * static_cast<double>(n));
    if (c.test + c.val >= n) {
        throw DatasetError("split ratios leave no training records for a class of " + std::to_string(n));
    }
    c.train = n - c.test - c.val;
    return c;
}

DatasetIndex stratified_split(const std::vector<std::string> &classes, std::vector<Record> records, const SplitRatios &ratios,
                              std::uint64_t seed) {
    const double sum = ratios.train + ratios.val + ratios.test;
    if (ratios.train <= 0.0 || ratios.val < 0.0 || ratios.test < 0.0 || std::abs(sum - 1.0) > 1e-9) {
        throw DatasetError("split ratios must be non-negative, train positive, and sum to 1");
    }
    std::vector<std::vector<std::size_t>> by_class(classes.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (records[i].label >= classes.size()) {
            throw DatasetError("record " + records[i].path + " has label " + std::to_string(records[i].label) + " outside " +
                               std::to_string(classes.size()) + " classes");
        }
        by_class[records[i].label].push_back(i);
    }
    Rng rng(seed);
    for (std::size_t k = 0; k < classes.size(); ++k) {
        auto &members = by_class[k];
        if (members.size() < 3) {
            throw DatasetError("class '" + classes[k] + "' has " + std::to_string(members.size()) +
                               " records; stratified splitting needs at least 3");
        }
        // members are in path order because records are path sorted
        rng.shuffle(members);
        const SplitCounts c = split_counts(members.size(), ratios);
        for (std::size_t j = 0; j < members.size(); ++j) {
            records[members[j]].split = j < c.test ? Split::test : j < c.test + c.val ? Split::val : Split::train;
        }
    }
    DatasetIndex idx;
    idx.classes = classes;
    idx.records = std::move(records);
    idx.seed = seed;
    return idx;
}

void write_splits_csv(std::ostream &os, const DatasetIndex &index) {
    os << "path,class,split\n";
    for (const auto &r : index.records) {
        if (r.path.find_first_of(",\"\n") != std::string::npos) {
            throw DatasetError("splits.csv: path '" + r.path + "' contains a comma, quote or newline");
        }
        os << r.path << ',' << index.classes.at(r.label) << ',' << to_string(r.split) << '\n';
    }
}

DatasetIndex read_splits_csv(std::istream &is, const fs::path &root, std::uint64_t seed) {
    std::string line;
    if (!std::getline(is, line) || line != "path,class,split") {
        throw DatasetError("splits.csv: missing header 'path,class,split'");
    }
    std::vector<std::tuple<std::string, std::string, Split>> rows;
    std::vector<std::string> classes;
    while (std::getline(is, line)) {
        if (line.empty()) {
            continue;
        }
        const auto a = line.find(',');
        const auto b = line.rfind(',');
        if (a == std::string::npos || a == b) {
            throw DatasetError("splits.csv: malformed row '" + line + "'");
        }
        rows.emplace_back(line.substr(0, a), line.substr(a + 1, b - a - 1), parse_split(line.substr(b + 1)));
        classes.push_back(std::get<1>(rows.back()));
    }
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
    DatasetIndex idx;
    idx.root = root;
    idx.classes = classes;
    idx.seed = seed;
    for (const auto &[path, cls, split] : rows) {
        const auto label = static_cast<std::size_t>(std::lower_bound(classes.begin(), classes.end(), cls) - classes.begin());
        idx.records.push_back({path, label, split});
    }
    return idx;
}

ImageFileSource::ImageFileSource(fs::path root, std::vector<Record> records, std::size_t side)
    : root_(std::move(root)), records_(std::move(records)), side_(side) {}

Tensor ImageFileSource::load(std::size_t i) const { return to_sample(load_image(root_ / records_.at(i).path), side_); }

Image synthetic_image(std::size_t cls, std::size_t side, Rng &rng) {
    static constexpr double kColours[kSyntheticClasses][3] = {
        {0.20, 0.25, 0.80},  // blue
        {0.20, 0.75, 0.25},  // green
        {0.80, 0.20, 0.20},  // red
        {0.80, 0.75, 0.20},  // yellow
    };
    if (cls >= kSyntheticClasses) {
        throw std::out_of_range("synthetic_image: class " + std::to_string(cls));
    }
    Image img{side, side, 3, std::vector<std::uint8_t>(side * side * 3)};
    const double brightness = rng.uniform(0.85, 1.15);
    for (std::size_t p = 0; p < side * side; ++p) {
        for (std::size_t c = 0; c < 3; ++c) {
            const double v = kColours[cls][c] * brightness + rng.uniform(-0.08, 0.08);
            img.pixels[p * 3 + c] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
        }
    }
    return img;
}

InMemorySource make_synthetic_set(std::size_t per_class, std::size_t side, std::uint64_t seed) {
    Rng rng(seed);
    InMemorySource src;
    for (std::size_t cls = 0; cls < kSyntheticClasses; ++cls) {
        for (std::size_t i = 0; i < per_class; ++i) {
            src.add(to_sample(synthetic_image(cls, side, rng), side), cls);
        }
    }
    return src;
}

std::size_t write_synthetic_corpus(const fs::path &root, std::size_t per_class, std::size_t side, std::uint64_t seed) {
    Rng rng(seed);
    std::size_t written = 0;
    for (std::size_t cls = 0; cls < kSyntheticClasses; ++cls) {
        const fs::path dir = root / kSyntheticClassNames[cls];
        fs::create_directories(dir);
        for (std::size_t i = 0; i < per_class; ++i) {
            char name[64];
            std::snprintf(name, sizeof(name), "%s_%03zu.png", kSyntheticClassNames[cls].c_str(), i);
            save_png(dir / name, synthetic_image(cls, side, rng));
            ++written;
        }
    }
    return written;
}

}  // namespace fibnet
