#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "bidir/errors.hpp"
#include "bidir/rng.hpp"
#include "bidir/tensor.hpp"

namespace bidir {

/// Labeled image set. Pixels are float32 in [0, 1], stored [n x c x h x w].
struct Dataset {
    Tensor<float> images;
    std::vector<Index> labels;
    Index classes = 10;

    Index count() const { return images.rank() ? images.dim(0) : 0; }
    Index channels() const { return images.dim(1); }
    Index height() const { return images.dim(2); }
    Index width() const { return images.dim(3); }
    Index sample_size() const { return channels() * height() * width(); }
    Shape sample_shape() const { return {channels(), height(), width()}; }

    void validate() const {
        images.require_rank(4, "dataset images");
        if (Index(labels.size()) != count())
            throw ValueError("dataset: " + std::to_string(labels.size()) + " labels for " +
                             std::to_string(count()) + " images");
        if (classes < 1) throw ValueError("dataset: non-positive class count");
        for (Index l : labels)
            if (l < 0 || l >= classes)
                throw ValueError("dataset: label " + std::to_string(l) + " outside [0, " +
                                 std::to_string(classes) + ")");
        if ((images.array() < 0.0f).any() || (images.array() > 1.0f).any())
            throw ValueError("dataset: pixel values outside [0, 1]");
    }

    /// First n samples, for desk-scale runs.
    Dataset take(Index n) const {
        if (n < 1 || n > count())
            throw ValueError("dataset take: " + std::to_string(n) + " of " +
                             std::to_string(count()) + " samples");
        Dataset out;
        out.classes = classes;
        out.labels.assign(labels.begin(), labels.begin() + n);
        out.images = Tensor<float>({n, channels(), height(), width()});
        std::copy(images.data(), images.data() + n * sample_size(), out.images.data());
        return out;
    }
};

namespace detail {

inline std::vector<unsigned char> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path + ": cannot open");
    in.seekg(0, std::ios::end);
    const auto size = in.tellg();
    in.seekg(0);
    std::vector<unsigned char> buf(static_cast<std::size_t>(size));
    in.read(reinterpret_cast<char*>(buf.data()), size);
    if (!in) throw ParseError(path + ": short read");
    return buf;
}

inline std::uint32_t be32(const std::vector<unsigned char>& buf, std::size_t offset,
                          const std::string& path) {
    if (offset + 4 > buf.size())
        throw ParseError(path + ": truncated header at offset " + std::to_string(offset));
    return (std::uint32_t(buf[offset]) << 24) | (std::uint32_t(buf[offset + 1]) << 16) |
           (std::uint32_t(buf[offset + 2]) << 8) | std::uint32_t(buf[offset + 3]);
}

}  // namespace detail

/// Reads an IDX image file (big-endian header: magic 0x803, count, rows,
/// cols; then count*rows*cols bytes). Pixels are scaled to [0, 1].
inline Tensor<float> load_idx_images(const std::string& path) {
    const auto buf = detail::read_file(path);
    const std::uint32_t magic = detail::be32(buf, 0, path);
    if (magic != 0x803)
        throw ParseError(path + ": bad magic " + std::to_string(magic) + " at offset 0 " +
                         "(expected 2051 for idx images)");
    const Index n = Index(detail::be32(buf, 4, path));
    const Index rows = Index(detail::be32(buf, 8, path));
    const Index cols = Index(detail::be32(buf, 12, path));
    if (n < 1 || rows < 1 || cols < 1)
        throw ParseError(path + ": degenerate dimensions " + std::to_string(n) + "x" +
                         std::to_string(rows) + "x" + std::to_string(cols));
    const std::size_t want = 16 + std::size_t(n) * std::size_t(rows) * std::size_t(cols);
    if (buf.size() != want)
        throw ParseError(path + ": expected " + std::to_string(want) + " bytes, file has " +
                         std::to_string(buf.size()));
    Tensor<float> images({n, 1, rows, cols});
    for (Index i = 0; i < images.size(); ++i)
        images[i] = float(buf[16 + std::size_t(i)]) / 255.0f;
    return images;
}

/// Reads an IDX label file (magic 0x801, count; then count bytes).
inline std::vector<Index> load_idx_labels(const std::string& path) {
    const auto buf = detail::read_file(path);
    const std::uint32_t magic = detail::be32(buf, 0, path);
    if (magic != 0x801)
        throw ParseError(path + ": bad magic " + std::to_string(magic) + " at offset 0 " +
                         "(expected 2049 for idx labels)");
    const Index n = Index(detail::be32(buf, 4, path));
    if (buf.size() != 8 + std::size_t(n))
        throw ParseError(path + ": expected " + std::to_string(8 + n) + " bytes, file has " +
                         std::to_string(buf.size()));
    std::vector<Index> labels(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = Index(buf[8 + i]);
    return labels;
}

inline Dataset load_idx_pair(const std::string& images_path, const std::string& labels_path,
                             Index classes = 10) {
    Dataset d;
    d.images = load_idx_images(images_path);
    d.labels = load_idx_labels(labels_path);
    d.classes = classes;
    d.validate();
    return d;
}

/// MNIST in the original four-file layout under `dir`.
inline Dataset load_mnist(const std::string& dir, bool train) {
    namespace fs = std::filesystem;
    const std::string img = train ? "train-images-idx3-ubyte" : "t10k-images-idx3-ubyte";
    const std::string lab = train ? "train-labels-idx1-ubyte" : "t10k-labels-idx1-ubyte";
    return load_idx_pair((fs::path(dir) / img).string(), (fs::path(dir) / lab).string());
}

/// One CIFAR-10 binary batch: 10000 records of [label byte][3072 pixel
/// bytes], pixels as three 32x32 planes in RGB order.
inline Dataset load_cifar10_file(const std::string& path) {
    constexpr Index kRecord = 3073, kPixels = 3072;
    const auto buf = detail::read_file(path);
    if (buf.empty() || buf.size() % std::size_t(kRecord) != 0)
        throw ParseError(path + ": size " + std::to_string(buf.size()) +
                         " is not a multiple of the 3073-byte record");
    const Index n = Index(buf.size()) / kRecord;
    Dataset d;
    d.images = Tensor<float>({n, 3, 32, 32});
    d.labels.resize(std::size_t(n));
    for (Index i = 0; i < n; ++i) {
        const std::size_t rec = std::size_t(i) * kRecord;
        const unsigned char label = buf[rec];
        if (label > 9)
            throw ParseError(path + ": label " + std::to_string(label) + " at offset " +
                             std::to_string(rec) + " outside [0, 9]");
        d.labels[std::size_t(i)] = Index(label);
        float* dst = d.images.data() + i * kPixels;
        for (Index p = 0; p < kPixels; ++p) dst[p] = float(buf[rec + 1 + std::size_t(p)]) / 255.0f;
    }
    d.validate();
    return d;
}

/// CIFAR-10 in the standard binary layout (data_batch_1..5.bin, test_batch.bin).
inline Dataset load_cifar10(const std::string& dir, bool train) {
    namespace fs = std::filesystem;
    if (!train) return load_cifar10_file((fs::path(dir) / "test_batch.bin").string());
    Dataset all;
    for (int b = 1; b <= 5; ++b) {
        Dataset part =
            load_cifar10_file((fs::path(dir) / ("data_batch_" + std::to_string(b) + ".bin")).string());
        if (all.count() == 0) {
            all = std::move(part);
            continue;
        }
        Tensor<float> merged({all.count() + part.count(), 3, 32, 32});
        std::copy(all.images.data(), all.images.data() + all.images.size(), merged.data());
        std::copy(part.images.data(), part.images.data() + part.images.size(),
                  merged.data() + all.images.size());
        all.images = std::move(merged);
        all.labels.insert(all.labels.end(), part.labels.begin(), part.labels.end());
    }
    all.validate();
    return all;
}

/// Shuffled minibatch iterator: one pass per epoch over a fresh permutation,
/// dropping a short tail so every batch has the full size.
class MinibatchStream {
public:
    struct Batch {
        Tensor<float> images;        // [batch x c x h x w]
        std::vector<Index> labels;
    };

    MinibatchStream(const Dataset& data, Index batch_size, std::uint64_t seed)
        : data_(&data), batch_(batch_size), rng_(seed) {
        if (batch_size < 1 || batch_size > data.count())
            throw ValueError("minibatch: batch size " + std::to_string(batch_size) +
                             " for dataset of " + std::to_string(data.count()));
        order_.resize(std::size_t(data.count()));
        for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = Index(i);
        reshuffle();
    }

    Index epoch() const { return epoch_; }

    Batch next() {
        if (cursor_ + batch_ > Index(order_.size())) reshuffle();
        Batch out;
        const Index ss = data_->sample_size();
        out.images = Tensor<float>({batch_, data_->channels(), data_->height(), data_->width()});
        out.labels.resize(std::size_t(batch_));
        for (Index i = 0; i < batch_; ++i) {
            const Index src = order_[std::size_t(cursor_ + i)];
            std::copy(data_->images.data() + src * ss, data_->images.data() + (src + 1) * ss,
                      out.images.data() + i * ss);
            out.labels[std::size_t(i)] = data_->labels[std::size_t(src)];
        }
        cursor_ += batch_;
        return out;
    }

private:
    void reshuffle() {
        shuffle(rng_, order_);
        cursor_ = 0;
        ++epoch_;
    }

    const Dataset* data_;
    Index batch_;
    Rng rng_;
    std::vector<Index> order_;
    Index cursor_ = 0;
    Index epoch_ = -1;  // first reshuffle brings it to 0
};

}  // namespace bidir
