#include <cstdio>
#include <fstream>
#include <memory>

#include <curl/curl.h>

#include "caipi/cli.hpp"
#include "caipi/error.hpp"

namespace caipi {
namespace {

std::size_t write_to_file(char* data, std::size_t size, std::size_t n, void* user) {
  auto* out = static_cast<std::ofstream*>(user);
  out->write(data, static_cast<std::streamsize>(size * n));
  return out->good() ? size * n : 0;
}

void download(const std::string& url, const std::filesystem::path& target) {
  const std::filesystem::path partial = target.string() + ".part";
  {
    std::ofstream out(partial, std::ios::binary);
    if (!out) throw Error("cannot write " + partial.string());
    std::unique_ptr<CURL, decltype(&curl_easy_cleanup)> curl(curl_easy_init(), curl_easy_cleanup);
    if (!curl) throw Error("curl initialisation failed");
    char message[CURL_ERROR_SIZE] = {};
    curl_easy_setopt(curl.get(), CURLOPT_URL, url.c_str());
    curl_easy_setopt(curl.get(), CURLOPT_FOLLOWLOCATION, 1L);
    curl_easy_setopt(curl.get(), CURLOPT_FAILONERROR, 1L);
    curl_easy_setopt(curl.get(), CURLOPT_CONNECTTIMEOUT, 30L);
    curl_easy_setopt(curl.get(), CURLOPT_WRITEFUNCTION, write_to_file);
    curl_easy_setopt(curl.get(), CURLOPT_WRITEDATA, &out);
    curl_easy_setopt(curl.get(), CURLOPT_ERRORBUFFER, message);
    const CURLcode rc = curl_easy_perform(curl.get());
    if (rc != CURLE_OK) {
      out.close();
      std::filesystem::remove(partial);
      throw Error("download of " + url + " failed: " +
                  (message[0] ? std::string(message) : curl_easy_strerror(rc)));
    }
  }
  std::ifstream check(partial, std::ios::binary);
  unsigned char magic[2] = {};
  check.read(reinterpret_cast<char*>(magic), 2);
  check.close();
  if (magic[0] != 0x1f || magic[1] != 0x8b) {
    std::filesystem::remove(partial);
    throw Error(url + " is not a gzip file");
  }
  std::filesystem::rename(partial, target);
}

}  // namespace

const std::vector<std::string>& fashion_mnist_files() {
  static const std::vector<std::string> files = {
      "train-images-idx3-ubyte.gz", "train-labels-idx1-ubyte.gz",
      "t10k-images-idx3-ubyte.gz", "t10k-labels-idx1-ubyte.gz"};
  return files;
}

void fetch_fashion_mnist(const std::string& base_url, const std::filesystem::path& dest,
                         std::ostream& log) {
  std::filesystem::create_directories(dest);
  std::string base = base_url;
  if (!base.empty() && base.back() != '/') base += '/';
  static const bool initialised = curl_global_init(CURL_GLOBAL_DEFAULT) == CURLE_OK;
  if (!initialised) throw Error("curl global initialisation failed");
  for (const auto& name : fashion_mnist_files()) {
    const auto target = dest / name;
    if (std::filesystem::exists(target)) {
      log << "exists: " << target.string() << '\n';
      continue;
    }
    log << "fetching " << base + name << '\n';
    download(base + name, target);
  }
}

std::string medical_mnist_instructions(const std::filesystem::path& dest) {
  return "The medical dataset cannot be fetched automatically.\n"
         "Download the Medical MNIST archive (folders AbdomenCT, BreastMRI, ChestCT, CXR,\n"
         "Hand, HeadCT of 64x64 JPEG images) from its Kaggle page and extract it so that\n"
         "the class folders sit directly under\n  " +
         dest.string() +
         "\nthen point a config at it with \"format\": \"image_folder\" and\n"
         "\"classes\": [\"ChestCT\", \"AbdomenCT\"].\n";
}

}  // namespace caipi
