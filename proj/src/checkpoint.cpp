#include "fibnet/checkpoint.hpp"

#include "fibnet/config_io.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <bit>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>

namespace fibnet {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char *kFormat = "fibnet-checkpoint";
constexpr int kVersion = 1;

std::uint32_t to_le(std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::big) {
        return __builtin_bswap32(v);
    }
    return v;
}

void write_file(const fs::path &p, const std::string &bytes) {
    std::ofstream os(p, std::ios::binary);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    os.flush();
    if (!os) {
        throw CheckpointError("cannot write " + p.string());
    }
}

std::string read_file(const fs::path &p) {
    std::ifstream is(p, std::ios::binary);
    if (!is) {
        throw CheckpointError("cannot read " + p.string());
    }
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

}  // namespace

void save_checkpoint(const fs::path &dir, const Model<float> &model, const CheckpointMeta &meta) {
    json tensors = json::array();
    std::string weights;
    for (const auto &e : model.params.entries()) {
        tensors.push_back(json{{"name", e.name},
                               {"shape", e.dims},
                               {"dtype", "float32"},
                               {"offset", weights.size()},
                               {"trainable", e.trainable}});
        for (float v : e.value) {
            const std::uint32_t u = to_le(std::bit_cast<std::uint32_t>(v));
            char b[4];
            std::memcpy(b, &u, 4);
            weights.append(b, 4);
        }
    }
    const json manifest{{"format", kFormat},
                        {"version", kVersion},
                        {"config", model.graph.config},
                        {"classes", meta.classes},
                        {"epoch", meta.epoch},
                        {"steps", meta.steps},
                        {"val_accuracy", meta.val_accuracy},
                        {"weights_bytes", weights.size()},
                        {"tensors", tensors}};

    const fs::path parent = dir.parent_path().empty() ? fs::path(".") : dir.parent_path();
    fs::create_directories(parent);
    const fs::path tmp = parent / (dir.filename().string() + ".tmp");
    const fs::path old = parent / (dir.filename().string() + ".old");
    fs::remove_all(tmp);
    fs::create_directory(tmp);
    write_file(tmp / "weights.bin", weights);
    write_file(tmp / "manifest.json", manifest.dump(2) + "\n");
    fs::remove_all(old);
    if (fs::exists(dir)) {
        fs::rename(dir, old);
    }
    fs::rename(tmp, dir);
    fs::remove_all(old);
}

Checkpoint load_checkpoint(const fs::path &dir) {
    json m;
    try {
        m = json::parse(read_file(dir / "manifest.json"));
    } catch (const json::parse_error &e) {
        throw CheckpointError(dir.string() + ": bad manifest: " + e.what());
    }
    if (m.value("format", "") != kFormat || m.value("version", 0) != kVersion) {
        throw CheckpointError(dir.string() + ": not a version " + std::to_string(kVersion) + " checkpoint");
    }
    Checkpoint ck;
    ModelConfig cfg;
    try {
        from_json(m.at("config"), cfg);
        ck.meta.classes = m.at("classes").get<std::vector<std::string>>();
        ck.meta.epoch = m.at("epoch").get<std::size_t>();
        ck.meta.steps = m.at("steps").get<std::size_t>();
        ck.meta.val_accuracy = m.at("val_accuracy").get<double>();
    } catch (const json::exception &e) {
        throw CheckpointError(dir.string() + ": bad manifest: " + e.what());
    } catch (const ConfigError &e) {
        throw CheckpointError(dir.string() + ": bad config: " + e.what());
    }
    try {
        ck.model = build_model<float>(cfg, 0);
    } catch (const ConfigError &e) {
        throw CheckpointError(dir.string() + ": bad config: " + e.what());
    }
    if (!ck.meta.classes.empty() && ck.meta.classes.size() != cfg.num_classes) {
        throw CheckpointError(dir.string() + ": " + std::to_string(ck.meta.classes.size()) + " class names for " +
                              std::to_string(cfg.num_classes) + " classes");
    }
    const std::string weights = read_file(dir / "weights.bin");
    const auto &tensors = m.at("tensors");
    auto &entries = ck.model.params.entries();
    if (tensors.size() != entries.size()) {
        throw CheckpointError(dir.string() + ": manifest has " + std::to_string(tensors.size()) + " tensors, config needs " +
                              std::to_string(entries.size()));
    }
    std::size_t expected = 0;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        auto &e = entries[i];
        const auto &t = tensors[i];
        const auto name = t.at("name").get<std::string>();
        const auto shape = t.at("shape").get<std::vector<std::size_t>>();
        const auto offset = t.at("offset").get<std::size_t>();
        if (name != e.name || shape != e.dims || t.at("dtype") != "float32" || offset != expected) {
            throw CheckpointError(dir.string() + ": tensor " + std::to_string(i) + " ('" + name +
                                  "') does not match the graph's '" + e.name + "'");
        }
        expected += 4 * e.value.size();
        if (expected > weights.size()) {
            throw CheckpointError(dir.string() + ": weights.bin is truncated at '" + name + "'");
        }
        for (std::size_t k = 0; k < e.value.size(); ++k) {
            std::uint32_t u;
            std::memcpy(&u, weights.data() + offset + 4 * k, 4);
            e.value[k] = std::bit_cast<float>(to_le(u));
        }
    }
    if (expected != weights.size()) {
        throw CheckpointError(dir.string() + ": weights.bin has " + std::to_string(weights.size()) + " bytes, expected " +
                              std::to_string(expected));
    }
    return ck;
}

RunLock::RunLock(const fs::path &dir) : path_(dir / ".lock") {
    fs::create_directories(dir);
    const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) {
        const int err = errno;
        if (err == EEXIST) {
            throw std::runtime_error("run directory " + dir.string() + " is locked by another process (" + path_.string() +
                                     "); remove it if that process is gone");
        }
        throw std::runtime_error("cannot lock " + dir.string() + ": " + std::strerror(err));
    }
    const std::string pid = std::to_string(::getpid()) + "\n";
    (void)!::write(fd, pid.data(), pid.size());
    ::close(fd);
}

RunLock::~RunLock() {
    std::error_code ec;
    fs::remove(path_, ec);
}

}  // namespace fibnet
