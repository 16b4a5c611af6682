#include "slicetrack/bridge.hpp"

#include <netdb.h>
#include <sys/socket.h>
#include <sys/un.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <cstdlib>
#include <cstring>

namespace slicetrack::bridge {

std::vector<std::uint32_t> rle_encode(const Mask2D& mask) {
  std::vector<std::uint32_t> runs;
  bool current = false;
  std::uint32_t run = 0;
  for (auto px : mask.pixels) {
    const bool v = px != 0;
    if (v != current) {
      runs.push_back(run);
      run = 0;
      current = v;
    }
    ++run;
  }
  runs.push_back(run);
  return runs;
}

Mask2D rle_decode(const std::vector<std::uint32_t>& runs, int width, int height) {
  if (width < 0 || height < 0) throw ProtocolError("negative frame size");
  Mask2D m(width, height);
  const std::size_t total = m.pixels.size();
  std::size_t pos = 0;
  bool value = false;
  for (auto run : runs) {
    if (run > total - pos) throw ProtocolError("RLE runs exceed " + std::to_string(total) + " pixels");
    if (value) std::fill_n(m.pixels.begin() + static_cast<std::ptrdiff_t>(pos), run, std::uint8_t{1});
    pos += run;
    value = !value;
  }
  if (pos != total)
    throw ProtocolError("RLE covers " + std::to_string(pos) + " pixels, frame has " + std::to_string(total));
  return m;
}

nlohmann::json frame_to_json(const Frame& f) {
  return {{"index", f.index}, {"rle", rle_encode(f.mask)}, {"width", f.mask.width}, {"height", f.mask.height}};
}

Frame frame_from_json(const nlohmann::json& j) {
  try {
    Frame f;
    f.index = j.at("index").get<int>();
    f.mask = rle_decode(j.at("rle").get<std::vector<std::uint32_t>>(), j.at("width").get<int>(),
                        j.at("height").get<int>());
    return f;
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("malformed frame: ") + e.what());
  }
}

// ---------------------------------------------------------------------------

namespace {

int connect_unix(const std::string& path) {
  sockaddr_un addr{};
  if (path.size() >= sizeof(addr.sun_path)) throw ProtocolError("socket path too long: " + path);
  addr.sun_family = AF_UNIX;
  std::memcpy(addr.sun_path, path.c_str(), path.size() + 1);
  const int fd = ::socket(AF_UNIX, SOCK_STREAM, 0);
  if (fd < 0) throw IoError(std::string("socket: ") + std::strerror(errno));
  if (::connect(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) != 0) {
    const int err = errno;
    ::close(fd);
    throw IoError("cannot connect to unix:" + path + ": " + std::strerror(err));
  }
  return fd;
}

int connect_tcp(const std::string& host, const std::string& port) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (const int rc = ::getaddrinfo(host.c_str(), port.c_str(), &hints, &res); rc != 0)
    throw IoError("cannot resolve " + host + ":" + port + ": " + ::gai_strerror(rc));
  int fd = -1;
  for (addrinfo* ai = res; ai; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd < 0) throw IoError("cannot connect to " + host + ":" + port);
  return fd;
}

}  // namespace

LineChannel::LineChannel(const std::string& endpoint, std::chrono::milliseconds timeout) {
  if (endpoint.empty()) throw ProtocolError("no bridge endpoint configured");
  if (endpoint.rfind("unix:", 0) == 0) {
    fd_ = connect_unix(endpoint.substr(5));
  } else {
    std::string rest = endpoint.rfind("tcp:", 0) == 0 ? endpoint.substr(4) : endpoint;
    const auto colon = rest.rfind(':');
    if (colon == std::string::npos) throw ProtocolError("endpoint must be unix:PATH or [tcp:]HOST:PORT");
    fd_ = connect_tcp(rest.substr(0, colon), rest.substr(colon + 1));
  }
  timeval tv{};
  tv.tv_sec = static_cast<time_t>(timeout.count() / 1000);
  tv.tv_usec = static_cast<suseconds_t>((timeout.count() % 1000) * 1000);
  ::setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
  ::setsockopt(fd_, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof(tv));
}

LineChannel::~LineChannel() {
  if (fd_ >= 0) ::close(fd_);
}

void LineChannel::send_line(const std::string& line) {
  std::string data = line;
  data.push_back('\n');
  std::size_t sent = 0;
  while (sent < data.size()) {
    const ssize_t n = ::send(fd_, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      if (errno == EAGAIN || errno == EWOULDBLOCK) throw IoError("bridge send timed out");
      throw IoError(std::string("bridge send failed: ") + std::strerror(errno));
    }
    sent += static_cast<std::size_t>(n);
  }
}

std::string LineChannel::recv_line() {
  while (true) {
    const auto nl = buffer_.find('\n');
    if (nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return line;
    }
    char chunk[65536];
    const ssize_t n = ::recv(fd_, chunk, sizeof(chunk), 0);
    if (n < 0) {
      if (errno == EINTR) continue;
      if (errno == EAGAIN || errno == EWOULDBLOCK) throw IoError("bridge response timed out");
      throw IoError(std::string("bridge receive failed: ") + std::strerror(errno));
    }
    if (n == 0) throw IoError("bridge closed the connection");
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

std::string endpoint_from_env() {
  const char* v = std::getenv(kEndpointEnv);
  return v ? std::string(v) : std::string();
}

// ---------------------------------------------------------------------------

namespace {

nlohmann::json points(const std::vector<Point>& pts) {
  auto arr = nlohmann::json::array();
  for (const auto& p : pts) arr.push_back({p.x, p.y});
  return arr;
}

class BridgeSession final : public PropagationSession {
 public:
  BridgeSession(const BridgeConfig& cfg, const ImageStack& stack, const PromptSet& prompts)
      : cfg_(cfg), dims_(stack.dims), start_(prompts.start_z) {
    static std::atomic<std::uint64_t> counter{0};
    slice_dir_ = cfg.work_dir / ("session-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    ExportOptions opt;
    opt.format = cfg.format;
    opt.jpeg_quality = cfg.jpeg_quality;
    export_slices(stack, slice_dir_, opt);
    try {
      start(prompts);
    } catch (...) {
      remove_slices();
      throw;
    }
  }

  ~BridgeSession() override {
    try {
      if (channel_ && !session_id_.empty())
        call({{"v", kProtocolVersion}, {"op", "close"}, {"session_id", session_id_}});
    } catch (...) {
    }
    remove_slices();
  }

  Mask2D prompt_frame() override { return initial_; }

  Mask2D begin(Direction direction) override {
    direction_ = direction;
    const auto resp = call({{"v", kProtocolVersion},
                            {"op", "propagate"},
                            {"session_id", session_id_},
                            {"direction", std::string(to_string(direction))}});
    frames_ = decode_frames(resp);
    const int expected = direction == Direction::forward ? dims_.nz - start_ : start_ + 1;
    if (static_cast<int>(frames_.size()) != expected)
      throw ContractViolation(std::string(to_string(direction)) + " propagation returned " +
                              std::to_string(frames_.size()) + " frames, expected " + std::to_string(expected));
    const int sign = direction == Direction::forward ? 1 : -1;
    for (std::size_t i = 0; i < frames_.size(); ++i) {
      if (frames_[i].index != start_ + sign * static_cast<int>(i))
        throw ContractViolation("frame " + std::to_string(i) + " has index " + std::to_string(frames_[i].index) +
                                ", expected " + std::to_string(start_ + sign * static_cast<int>(i)));
    }
    cursor_ = 0;
    return frames_[0].mask;
  }

  Mask2D step(int z) override {
    ++cursor_;
    if (cursor_ >= frames_.size() || frames_[cursor_].index != z)
      throw ContractViolation("no frame " + std::to_string(z) + " in the " + std::string(to_string(direction_)) +
                              " response");
    return frames_[cursor_].mask;
  }

 private:
  void start(const PromptSet& prompts) {
    channel_ = std::make_unique<LineChannel>(cfg_.endpoint, cfg_.timeout);
    const nlohmann::json req{
        {"v", kProtocolVersion},
        {"op", "start_session"},
        {"slice_dir", std::filesystem::absolute(slice_dir_).string()},
        {"start_frame", start_},
        {"prompts", {{"positives", points(prompts.positives)}, {"negatives", points(prompts.negatives)}}}};
    const auto resp = call(req);
    session_id_ = resp.at("session_id").get<std::string>();
    const auto frames = decode_frames(resp);
    if (frames.size() != 1 || frames[0].index != start_)
      throw ContractViolation("start_session must return exactly the start frame " + std::to_string(start_));
    initial_ = frames[0].mask;
  }

  void remove_slices() {
    if (cfg_.keep_slices) return;
    std::error_code ec;
    std::filesystem::remove_all(slice_dir_, ec);
  }

  nlohmann::json call(const nlohmann::json& req) {
    channel_->send_line(req.dump());
    const std::string line = channel_->recv_line();
    nlohmann::json resp;
    try {
      resp = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ProtocolError(std::string("malformed bridge response: ") + e.what());
    }
    if (!resp.is_object()) throw ProtocolError("bridge response is not an object");
    if (resp.contains("v") && resp["v"] != kProtocolVersion)
      throw ProtocolError("bridge protocol version " + resp["v"].dump() + ", expected " +
                          std::to_string(kProtocolVersion));
    if (resp.contains("error") && !resp["error"].is_null()) {
      const auto& err = resp["error"];
      const std::string msg = err.is_object() ? err.value("message", err.dump()) : err.dump();
      throw ProtocolError("bridge error: " + msg);
    }
    if (!resp.contains("session_id") || !resp["session_id"].is_string())
      throw ProtocolError("bridge response lacks session_id");
    return resp;
  }

  std::vector<Frame> decode_frames(const nlohmann::json& resp) const {
    if (!resp.contains("frames") || !resp["frames"].is_array()) throw ProtocolError("bridge response lacks frames");
    std::vector<Frame> frames;
    for (const auto& f : resp["frames"]) {
      Frame fr = frame_from_json(f);
      if (fr.mask.width != dims_.nx || fr.mask.height != dims_.ny)
        throw ProtocolError("frame " + std::to_string(fr.index) + " is " + std::to_string(fr.mask.width) + "x" +
                            std::to_string(fr.mask.height) + ", slices are " + std::to_string(dims_.nx) + "x" +
                            std::to_string(dims_.ny));
      frames.push_back(std::move(fr));
    }
    return frames;
  }

  BridgeConfig cfg_;
  Dims dims_;
  int start_;
  std::filesystem::path slice_dir_;
  std::unique_ptr<LineChannel> channel_;
  std::string session_id_;
  Mask2D initial_;
  Direction direction_ = Direction::forward;
  std::vector<Frame> frames_;
  std::size_t cursor_ = 0;
};

class BridgePropagator final : public Propagator {
 public:
  explicit BridgePropagator(BridgeConfig cfg) : cfg_(std::move(cfg)) {}

  [[nodiscard]] std::string id() const override { return "bridge"; }

  std::unique_ptr<PropagationSession> open(const ImageStack& stack, const PromptSet& prompts) override {
    return std::make_unique<BridgeSession>(cfg_, stack, prompts);
  }

 private:
  BridgeConfig cfg_;
};

}  // namespace

std::unique_ptr<Propagator> bridge_propagator(BridgeConfig config) {
  return std::make_unique<BridgePropagator>(std::move(config));
}

}  // namespace slicetrack::bridge
