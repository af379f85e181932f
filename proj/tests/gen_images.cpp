// Writes a set of synthetic PNGs for shell-driven tests:
//   gen_images <out_dir> <count> <size> <seed>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>

#include "dear/imaging.hpp"
#include "support.hpp"

int main(int argc, char** argv) {
    if (argc != 5) {
        std::fprintf(stderr, "usage: gen_images <out_dir> <count> <size> <seed>\n");
        return 2;
    }
    const std::string out_dir = argv[1];
    const int count = std::atoi(argv[2]);
    const int size = std::atoi(argv[3]);
    const uint64_t seed = std::strtoull(argv[4], nullptr, 10);
    std::filesystem::create_directories(out_dir);
    for (int i = 0; i < count; ++i) {
        dear::Image img = dear::testsup::synth_image(size, size, seed + uint64_t(i));
        dear::write_image(img, out_dir + "/img" + std::to_string(i) + ".png");
    }
    return 0;
}
