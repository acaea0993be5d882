#include "herdscope/adapter.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <condition_variable>
#include <cstring>
#include <mutex>
#include <thread>

#include "herdscope/error.hpp"

extern char** environ;

namespace herdscope {

namespace fs = std::filesystem;

namespace {

constexpr std::size_t kMaxStderr = 64 * 1024;

class TempDir {
 public:
  TempDir() {
    static std::atomic<unsigned> counter{0};
    path_ = fs::temp_directory_path() /
            ("herdscope-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

}  // namespace

ProcessResult run_process(const std::string& executable, const std::vector<std::string>& args,
                          std::chrono::duration<double> timeout) {
  int err_pipe[2];
  require(::pipe(err_pipe) == 0, ErrorCode::kAdapter,
          std::string("pipe failed: ") + std::strerror(errno));

  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_addopen(&actions, STDIN_FILENO, "/dev/null", O_RDONLY, 0);
  posix_spawn_file_actions_addopen(&actions, STDOUT_FILENO, "/dev/null", O_WRONLY, 0);
  posix_spawn_file_actions_adddup2(&actions, err_pipe[1], STDERR_FILENO);
  posix_spawn_file_actions_addclose(&actions, err_pipe[0]);
  posix_spawn_file_actions_addclose(&actions, err_pipe[1]);

  std::vector<std::string> argv_store{executable};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());
  argv.push_back(nullptr);

  pid_t pid = 0;
  const int rc = ::posix_spawnp(&pid, executable.c_str(), &actions, nullptr, argv.data(), environ);
  posix_spawn_file_actions_destroy(&actions);
  ::close(err_pipe[1]);
  if (rc != 0) {
    ::close(err_pipe[0]);
    fail(ErrorCode::kAdapter, "cannot start adapter '" + executable + "': " + std::strerror(rc));
  }

  ProcessResult result;
  const auto deadline = std::chrono::steady_clock::now() +
                        std::chrono::duration_cast<std::chrono::steady_clock::duration>(timeout);
  bool pipe_open = true;
  int status = 0;
  bool exited = false;
  char buf[4096];
  while (!exited) {
    const auto now = std::chrono::steady_clock::now();
    if (now >= deadline) {
      ::kill(pid, SIGKILL);
      ::waitpid(pid, &status, 0);
      result.timed_out = true;
      break;
    }
    if (pipe_open) {
      pollfd pfd{err_pipe[0], POLLIN, 0};
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now);
      const int wait_ms = static_cast<int>(std::clamp<long long>(left.count(), 1, 50));
      if (::poll(&pfd, 1, wait_ms) > 0) {
        const ssize_t n = ::read(err_pipe[0], buf, sizeof buf);
        if (n > 0) {
          if (result.stderr_text.size() < kMaxStderr)
            result.stderr_text.append(buf, static_cast<std::size_t>(n));
        } else if (n == 0) {
          pipe_open = false;
        }
      }
    } else {
      std::this_thread::sleep_for(std::chrono::milliseconds(2));
    }
    const pid_t w = ::waitpid(pid, &status, WNOHANG);
    if (w == pid) exited = true;
  }
  // Drain whatever the child left in the pipe.
  for (ssize_t n; pipe_open && (n = ::read(err_pipe[0], buf, sizeof buf)) > 0;)
    if (result.stderr_text.size() < kMaxStderr)
      result.stderr_text.append(buf, static_cast<std::size_t>(n));
  ::close(err_pipe[0]);

  if (!result.timed_out)
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
  return result;
}

ImageBuffer external_upscale(const fs::path& patch_path, int r, const AdapterConfig& adapter) {
  require(r == 2 || r == 4 || r == 8, ErrorCode::kInvalidArgument, "adapter scale must be 2, 4 or 8");
  require(!adapter.executable.empty(), ErrorCode::kConfig, "adapter executable not set");
  const ImageInfo in = read_image_info(patch_path);

  TempDir tmp;
  const fs::path out_path = tmp.path() / "out.ppm";
  std::vector<std::string> args = adapter.prefix_args;
  args.insert(args.end(), {"--in", patch_path.string(), "--out", out_path.string(), "--scale",
                           std::to_string(r)});
  const auto res = run_process(adapter.executable, args,
                               std::chrono::duration<double>(adapter.timeout_seconds));
  if (res.timed_out)
    fail(ErrorCode::kAdapter, "adapter '" + adapter.executable + "' timed out after " +
                                  std::to_string(adapter.timeout_seconds) + " s");
  if (res.exit_code != 0)
    fail(ErrorCode::kAdapter, "adapter '" + adapter.executable + "' exited with status " +
                                  std::to_string(res.exit_code) + ": " + res.stderr_text);

  ImageBuffer out;
  try {
    out = load_image(out_path);
  } catch (const Error& e) {
    fail(ErrorCode::kAdapter, std::string("adapter output unreadable: ") + e.what());
  }
  require(out.width() == r * in.width && out.height() == r * in.height && out.channels() == 3,
          ErrorCode::kAdapter,
          "adapter output is " + std::to_string(out.width()) + "x" + std::to_string(out.height()) +
              "x" + std::to_string(out.channels()) + ", expected " + std::to_string(r * in.width) +
              "x" + std::to_string(r * in.height) + "x3");
  return out;
}

struct ExternalUpscaler::Gate {
  explicit Gate(int cap) : free(cap) {}
  std::mutex mu;
  std::condition_variable cv;
  int free;
};

ExternalUpscaler::ExternalUpscaler(AdapterConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.max_concurrent <= 0)
    cfg_.max_concurrent = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  gate_ = std::make_unique<Gate>(cfg_.max_concurrent);
}

ExternalUpscaler::~ExternalUpscaler() = default;

ImageBuffer ExternalUpscaler::upscale(const ImageBuffer& patch, int r) const {
  {
    std::unique_lock lock(gate_->mu);
    gate_->cv.wait(lock, [&] { return gate_->free > 0; });
    --gate_->free;
  }
  struct Release {
    Gate& g;
    ~Release() {
      {
        std::lock_guard lock(g.mu);
        ++g.free;
      }
      g.cv.notify_one();
    }
  } release{*gate_};

  TempDir tmp;
  const fs::path in_path = tmp.path() / "in.ppm";
  save_image(patch, in_path);
  return external_upscale(in_path, r, cfg_);
}

}  // namespace herdscope
