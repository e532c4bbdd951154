#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

namespace caipi {

/// Entry point of the `caipi` executable. Returns 0 on success, 1 on runtime errors and
/// 2 on usage errors.
int cli_main(int argc, char** argv);
/// Same, with explicit streams (for tests).
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

inline constexpr const char* kFashionBaseUrl =
    "http://fashion-mnist.s3-website.eu-central-1.amazonaws.com/";

/// The four gzip IDX files of Fashion-MNIST.
const std::vector<std::string>& fashion_mnist_files();

/// Downloads `base_url + name` into `dest/name` for every Fashion-MNIST file and checks
/// for the gzip signature. Throws Error on transport or HTTP failures. file:// URLs work.
void fetch_fashion_mnist(const std::string& base_url, const std::filesystem::path& dest,
                         std::ostream& log);

/// Manual download steps for the medical dataset, which has no stable direct URL.
std::string medical_mnist_instructions(const std::filesystem::path& dest);

}  // namespace caipi
