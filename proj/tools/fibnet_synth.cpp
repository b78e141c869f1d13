// fibnet-synth: writes the four-colour synthetic corpus as PNG files.

#include "fibnet/data.hpp"
#include "fibnet/train.hpp"

#include "CLI11.hpp"

#include <iostream>

int main(int argc, char **argv) {
    CLI::App app{"Write a synthetic directory-per-class corpus (blue, green, red, yellow)"};
    std::string out;
    std::size_t per_class = 10;
    std::size_t side = 32;
    std::uint64_t seed = fibnet::kDefaultSeed;
    app.add_option("--out", out, "corpus root")->required();
    app.add_option("--per-class", per_class, "images per class")->capture_default_str()->check(CLI::PositiveNumber);
    app.add_option("--side", side, "image side in pixels")->capture_default_str()->check(CLI::PositiveNumber);
    app.add_option("--seed", seed)->capture_default_str();
    CLI11_PARSE(app, argc, argv);
    try {
        const std::size_t n = fibnet::write_synthetic_corpus(out, per_class, side, seed);
        std::cout << "wrote " << n << " images to " << out << "\n";
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
