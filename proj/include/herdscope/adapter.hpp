#pragma once

#include <chrono>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "herdscope/image.hpp"

namespace herdscope {

// External super-resolution process. It is invoked as
//   <executable> [prefix_args...] --in <path> --out <path> --scale <r>
// and must write a P6 image of exactly (r*w, r*h) to --out and exit 0.
struct AdapterConfig {
  std::string executable;
  std::vector<std::string> prefix_args;
  double timeout_seconds = 60.0;
  int max_concurrent = 0;  // 0: number of logical processors
};

// Result of running a child process to completion (or until killed).
struct ProcessResult {
  int exit_code = -1;
  bool timed_out = false;
  std::string stderr_text;
};

ProcessResult run_process(const std::string& executable, const std::vector<std::string>& args,
                          std::chrono::duration<double> timeout);

ImageBuffer external_upscale(const std::filesystem::path& patch_path, int r,
                             const AdapterConfig& adapter);

// Shares a concurrency cap across threads; in-memory images go through
// temporary files.
class ExternalUpscaler {
 public:
  explicit ExternalUpscaler(AdapterConfig cfg);
  ~ExternalUpscaler();
  ExternalUpscaler(const ExternalUpscaler&) = delete;
  ExternalUpscaler& operator=(const ExternalUpscaler&) = delete;

  ImageBuffer upscale(const ImageBuffer& patch, int r) const;
  const AdapterConfig& config() const { return cfg_; }

 private:
  struct Gate;
  AdapterConfig cfg_;
  std::unique_ptr<Gate> gate_;
};

}  // namespace herdscope
