#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <stdexcept>
#include <string>

namespace vuld::io {

/// Little-endian byte sink over a std::string.
class ByteWriter {
   public:
    void bytes(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
    template <typename U>
    void put(U v) {
        static_assert(std::is_trivially_copyable_v<U>);
        unsigned char raw[sizeof(U)];
        std::memcpy(raw, &v, sizeof(U));
        if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(U));
        bytes(raw, sizeof(U));
    }
    std::string take() { return std::move(buf_); }

   private:
    std::string buf_;
};

class ByteReader {
   public:
    explicit ByteReader(const std::string& buf, std::string context) : buf_(buf), context_(std::move(context)) {}

    void bytes(void* p, std::size_t n) {
        if (pos_ + n > buf_.size()) throw std::runtime_error(context_ + ": truncated data");
        std::memcpy(p, buf_.data() + pos_, n);
        pos_ += n;
    }
    template <typename U>
    U get() {
        unsigned char raw[sizeof(U)];
        bytes(raw, sizeof(U));
        if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(U));
        U v;
        std::memcpy(&v, raw, sizeof(U));
        return v;
    }
    bool done() const { return pos_ == buf_.size(); }
    const std::string& context() const { return context_; }

   private:
    const std::string& buf_;
    std::string context_;
    std::size_t pos_ = 0;
};

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

}  // namespace vuld::io
