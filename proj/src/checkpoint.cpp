#include "catpol/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

namespace catpol {

namespace {

class Writer {
public:
    void u32(std::uint32_t v)
    {
        for (int i = 0; i < 4; ++i)
            out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v)
    {
        for (int i = 0; i < 8; ++i)
            out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void bytes(std::string_view s) { out_.insert(out_.end(), s.begin(), s.end()); }

    std::vector<std::uint8_t> take() { return std::move(out_); }

private:
    std::vector<std::uint8_t> out_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> in)
        : in_(in)
    {
    }

    // `what` names the field being read for truncation errors.
    std::uint32_t u32(const std::string& what)
    {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(in_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64(const std::string& what)
    {
        need(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(in_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
        pos_ += 8;
        return v;
    }
    double f64(const std::string& what) { return std::bit_cast<double>(u64(what)); }
    std::string bytes(std::size_t n, const std::string& what)
    {
        need(n, what);
        std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    std::size_t remaining() const { return in_.size() - pos_; }

private:
    void need(std::size_t n, const std::string& what) const
    {
        if (in_.size() - pos_ < n)
            throw CheckpointError("checkpoint truncated while reading " + what);
    }

    std::span<const std::uint8_t> in_;
    std::size_t pos_ = 0;
};

} // namespace

const Mat& Checkpoint::tensor(const std::string& name) const
{
    for (const auto& [n, m] : tensors)
        if (n == name)
            return m;
    throw CheckpointError("checkpoint has no tensor '" + name + "'");
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt)
{
    std::set<std::string> names;
    Writer w;
    w.bytes(std::string_view(kCheckpointMagic, 8));
    w.u32(static_cast<std::uint32_t>(ckpt.tensors.size()));
    for (const auto& [name, m] : ckpt.tensors) {
        if (!names.insert(name).second)
            throw CheckpointError("duplicate tensor name '" + name + "'");
        w.u32(static_cast<std::uint32_t>(name.size()));
        w.bytes(name);
        w.u32(static_cast<std::uint32_t>(m.rows()));
        w.u32(static_cast<std::uint32_t>(m.cols()));
        for (Eigen::Index i = 0; i < m.size(); ++i)
            w.f64(m.data()[i]);
    }
    w.u32(static_cast<std::uint32_t>(ckpt.config.size()));
    w.bytes(ckpt.config);
    for (auto word : ckpt.rng_state)
        w.u64(word);
    return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes)
{
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0)
        throw CheckpointError("not a checkpoint: magic bytes do not read CATPOL01");
    Reader r(bytes.subspan(8));
    Checkpoint ckpt;
    std::set<std::string> names;
    const std::uint32_t count = r.u32("tensor count");
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::string slot = "tensor #" + std::to_string(i);
        const std::uint32_t len = r.u32(slot + " name length");
        std::string name = r.bytes(len, slot + " name");
        if (!names.insert(name).second)
            throw CheckpointError("duplicate tensor name '" + name + "'");
        const std::uint32_t rows = r.u32("tensor '" + name + "' rows");
        const std::uint32_t cols = r.u32("tensor '" + name + "' cols");
        const std::uint64_t n = std::uint64_t{rows} * cols;
        if (r.remaining() / 8 < n)
            throw CheckpointError("checkpoint truncated while reading tensor '" + name + "' values");
        Mat m(rows, cols);
        for (std::uint64_t k = 0; k < n; ++k)
            m.data()[k] = r.f64("tensor '" + name + "' values");
        ckpt.tensors.emplace_back(std::move(name), std::move(m));
    }
    const std::uint32_t cfg_len = r.u32("config length");
    ckpt.config = r.bytes(cfg_len, "config text");
    for (auto& word : ckpt.rng_state)
        word = r.u64("generator state");
    if (r.remaining() != 0)
        throw CheckpointError("checkpoint has " + std::to_string(r.remaining()) + " trailing bytes");
    return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt)
{
    const auto bytes = encode_checkpoint(ckpt);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw std::runtime_error("cannot write checkpoint '" + path + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw std::runtime_error("failed writing checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw CheckpointError("cannot open checkpoint '" + path + "'");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

} // namespace catpol
