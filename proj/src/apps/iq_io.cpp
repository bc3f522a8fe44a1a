#include "nbiot/apps/iq_io.hpp"

#include <arpa/inet.h>
#include <cerrno>
#include <cstring>
#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>
#include <vector>

namespace nbiot {

namespace {

std::vector<float> to_floats(std::span<const cf_t> samples)
{
  std::vector<float> out(2 * samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    out[2 * i] = float(samples[i].real());
    out[2 * i + 1] = float(samples[i].imag());
  }
  return out;
}

std::FILE* open_or_throw(const std::string& path, const char* mode)
{
  std::FILE* f = std::fopen(path.c_str(), mode);
  if (!f) {
    raise(error_code::io_error, "cannot open " + path + ": " + std::strerror(errno));
  }
  return f;
}

} // namespace

void write_iq_file(const std::string& path, std::span<const cf_t> samples)
{
  iq_file_writer w(path);
  w.write(samples);
}

sample_buffer read_iq_file(const std::string& path)
{
  iq_file_reader r(path);
  sample_buffer out;
  for (;;) {
    auto part = r.read(1 << 16);
    if (part.empty()) {
      return out;
    }
    out.insert(out.end(), part.begin(), part.end());
  }
}

iq_file_writer::iq_file_writer(const std::string& path) : file_(open_or_throw(path, "wb"), &std::fclose) {}

void iq_file_writer::write(std::span<const cf_t> samples)
{
  const auto f = to_floats(samples);
  if (std::fwrite(f.data(), sizeof(float), f.size(), file_.get()) != f.size()) {
    raise(error_code::io_error, "short write to IQ file");
  }
  written_ += samples.size();
}

iq_file_reader::iq_file_reader(const std::string& path) : file_(open_or_throw(path, "rb"), &std::fclose) {}

sample_buffer iq_file_reader::read(std::size_t n)
{
  std::vector<float> f(2 * n);
  const std::size_t got = std::fread(f.data(), sizeof(float), f.size(), file_.get());
  if (got % 2 != 0) {
    raise(error_code::io_error, "IQ file ends inside a sample");
  }
  sample_buffer out(got / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = {f[2 * i], f[2 * i + 1]};
  }
  return out;
}

// --- TCP --------------------------------------------------------------------------

tcp_stream& tcp_stream::operator=(tcp_stream&& other) noexcept
{
  if (this != &other) {
    if (fd_ >= 0) {
      ::close(fd_);
    }
    fd_ = other.fd_;
    pending_ = std::move(other.pending_);
    other.fd_ = -1;
  }
  return *this;
}

tcp_stream::~tcp_stream()
{
  if (fd_ >= 0) {
    ::close(fd_);
  }
}

tcp_stream tcp_stream::connect(const std::string& host, uint16_t port)
{
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 || !res) {
    raise(error_code::io_error, "cannot resolve " + host);
  }
  const int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  const int rc = fd >= 0 ? ::connect(fd, res->ai_addr, res->ai_addrlen) : -1;
  freeaddrinfo(res);
  if (rc != 0) {
    if (fd >= 0) {
      ::close(fd);
    }
    raise(error_code::io_error, "cannot connect to " + host + ":" + std::to_string(port));
  }
  return tcp_stream(fd);
}

std::size_t tcp_stream::read_some(std::span<uint8_t> buf)
{
  if (!pending_.empty()) {
    const std::size_t n = std::min(buf.size(), pending_.size());
    std::memcpy(buf.data(), pending_.data(), n);
    pending_.erase(0, n);
    return n;
  }
  for (;;) {
    const ssize_t n = ::recv(fd_, buf.data(), buf.size(), 0);
    if (n >= 0) {
      return std::size_t(n);
    }
    if (errno != EINTR) {
      return 0;
    }
  }
}

void tcp_stream::write_all(std::span<const uint8_t> data)
{
  std::size_t done = 0;
  while (done < data.size()) {
    const ssize_t n = ::send(fd_, data.data() + done, data.size() - done, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) {
        continue;
      }
      raise(error_code::io_error, std::string("socket write failed: ") + std::strerror(errno));
    }
    done += std::size_t(n);
  }
}

std::optional<std::string> tcp_stream::read_line()
{
  for (;;) {
    const auto nl = pending_.find('\n');
    if (nl != std::string::npos) {
      std::string line = pending_.substr(0, nl);
      pending_.erase(0, nl + 1);
      if (!line.empty() && line.back() == '\r') {
        line.pop_back();
      }
      return line;
    }
    char buf[512];
    const ssize_t n = ::recv(fd_, buf, sizeof buf, 0);
    if (n < 0 && errno == EINTR) {
      continue;
    }
    if (n <= 0) {
      if (pending_.empty()) {
        return std::nullopt;
      }
      return std::exchange(pending_, std::string());
    }
    pending_.append(buf, std::size_t(n));
  }
}

void tcp_stream::write_iq(std::span<const cf_t> samples)
{
  const auto f = to_floats(samples);
  write_all(std::span(reinterpret_cast<const uint8_t*>(f.data()), f.size() * sizeof(float)));
}

sample_buffer tcp_stream::read_iq(std::size_t n)
{
  std::vector<float> f(2 * n);
  auto* bytes = reinterpret_cast<uint8_t*>(f.data());
  const std::size_t want = f.size() * sizeof(float);
  std::size_t got = 0;
  while (got < want) {
    const std::size_t r = read_some(std::span(bytes + got, want - got));
    if (r == 0) {
      break;
    }
    got += r;
  }
  sample_buffer out(got / (2 * sizeof(float)));
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = {f[2 * i], f[2 * i + 1]};
  }
  return out;
}

bool tcp_stream::wait_readable(int timeout_ms)
{
  if (!pending_.empty()) {
    return true;
  }
  pollfd p{fd_, POLLIN, 0};
  return ::poll(&p, 1, timeout_ms) > 0;
}

void tcp_stream::shutdown()
{
  if (fd_ >= 0) {
    ::shutdown(fd_, SHUT_RDWR);
  }
}

tcp_listener::tcp_listener(uint16_t port)
{
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) {
    raise(error_code::bind_failure, "cannot create socket");
  }
  const int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(port);
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(fd_, 4) != 0) {
    const std::string why = std::strerror(errno);
    ::close(fd_);
    fd_ = -1;
    raise(error_code::bind_failure, "cannot listen on port " + std::to_string(port) + ": " + why);
  }
  socklen_t len = sizeof addr;
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

tcp_listener::~tcp_listener()
{
  close();
}

std::optional<tcp_stream> tcp_listener::accept(int timeout_ms)
{
  if (fd_ < 0) {
    return std::nullopt;
  }
  pollfd p{fd_, POLLIN, 0};
  if (::poll(&p, 1, timeout_ms) <= 0 || !(p.revents & POLLIN)) {
    return std::nullopt;
  }
  const int c = ::accept(fd_, nullptr, nullptr);
  if (c < 0) {
    return std::nullopt;
  }
  return tcp_stream(c);
}

void tcp_listener::close()
{
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

} // namespace nbiot
