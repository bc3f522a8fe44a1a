#pragma once

#include "nbiot/common.hpp"

#include <cstdio>
#include <memory>
#include <optional>
#include <span>
#include <string>

namespace nbiot {

/// Interleaved little-endian float32 I/Q, the common "cf32" file format.
void write_iq_file(const std::string& path, std::span<const cf_t> samples);
/// Throws io_error when the file cannot be opened or has a partial sample.
sample_buffer read_iq_file(const std::string& path);

class iq_file_writer
{
public:
  /// Throws io_error when the file cannot be created.
  explicit iq_file_writer(const std::string& path);
  void write(std::span<const cf_t> samples);
  uint64_t samples_written() const { return written_; }

private:
  std::unique_ptr<std::FILE, int (*)(std::FILE*)> file_;
  uint64_t written_ = 0;
};

class iq_file_reader
{
public:
  explicit iq_file_reader(const std::string& path);
  /// Up to n samples; empty at end of file.
  sample_buffer read(std::size_t n);

private:
  std::unique_ptr<std::FILE, int (*)(std::FILE*)> file_;
};

// --- TCP --------------------------------------------------------------------------

/// Connected stream socket; closes on destruction.
class tcp_stream
{
public:
  explicit tcp_stream(int fd) : fd_(fd) {}
  tcp_stream(tcp_stream&& other) noexcept : fd_(other.fd_) { other.fd_ = -1; }
  tcp_stream& operator=(tcp_stream&& other) noexcept;
  tcp_stream(const tcp_stream&) = delete;
  tcp_stream& operator=(const tcp_stream&) = delete;
  ~tcp_stream();

  /// Throws io_error when the connection is refused.
  static tcp_stream connect(const std::string& host, uint16_t port);

  /// Bytes read, 0 at end of stream.
  std::size_t read_some(std::span<uint8_t> buf);
  /// Throws io_error when the peer went away.
  void write_all(std::span<const uint8_t> data);
  /// Line without the terminator; empty optional at end of stream.
  std::optional<std::string> read_line();

  void write_iq(std::span<const cf_t> samples);
  /// Exactly n samples unless the stream ends first.
  sample_buffer read_iq(std::size_t n);

  /// True when a read would not block (data or end of stream), false after timeout_ms.
  bool wait_readable(int timeout_ms);
  void shutdown();
  bool valid() const { return fd_ >= 0; }

private:
  int fd_ = -1;
  std::string pending_;
};

/// Listening socket on the loopback interface.
class tcp_listener
{
public:
  /// Port 0 picks a free port. Throws bind_failure.
  explicit tcp_listener(uint16_t port);
  tcp_listener(const tcp_listener&) = delete;
  tcp_listener& operator=(const tcp_listener&) = delete;
  ~tcp_listener();

  uint16_t port() const { return port_; }
  /// Waits up to timeout_ms for a client; empty on timeout or after close().
  std::optional<tcp_stream> accept(int timeout_ms);
  void close();

private:
  int fd_ = -1;
  uint16_t port_ = 0;
};

} // namespace nbiot
