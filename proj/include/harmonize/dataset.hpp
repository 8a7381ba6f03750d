#pragma once

#include <algorithm>
#include <condition_variable>
#include <deque>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "harmonize/errors.hpp"
#include "harmonize/image.hpp"
#include "harmonize/tensor.hpp"

namespace harmonize {

/// One training/evaluation sample: composite, ground truth, foreground mask.
struct ImageTriplet {
    std::string id;
    Tensor<float> composite;  // (3,H,W) in [0,1]
    Tensor<float> real;       // (3,H,W) in [0,1]
    Tensor<float> mask;       // (1,H,W) binary
};

namespace detail {

inline std::vector<std::string> read_split_ids(const std::string& root, const std::string& split) {
    namespace fs = std::filesystem;
    const fs::path list_path = fs::path(root) / (split + ".txt");
    std::ifstream in(list_path);
    if (!in) throw DatasetError("dataset: missing split list " + list_path.string());
    std::vector<std::string> ids;
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
        if (!line.empty()) ids.push_back(line);
    }
    if (ids.empty()) throw DatasetError("dataset: split list " + list_path.string() + " is empty");
    std::sort(ids.begin(), ids.end());
    return ids;
}

}  // namespace detail

// Loads one triplet by id: decode, optional resize, mask binarization, and the
// background-consistency check (composite and real must agree outside the
// mask). Violations are recorded as warnings, not errors.
inline ImageTriplet load_triplet(const std::string& root, const std::string& id,
                                 std::size_t resolution, std::vector<std::string>* warnings) {
    namespace fs = std::filesystem;
    auto file = [&](const char* dir) {
        const fs::path p = fs::path(root) / dir / (id + ".png");
        if (!fs::exists(p))
            throw DatasetError("dataset: id '" + id + "' is missing " + p.string());
        return p.string();
    };
    ImageTriplet t;
    t.id = id;
    t.composite = read_png_rgb(file("composite_images"));
    t.real = read_png_rgb(file("real_images"));
    t.mask = read_png_gray(file("masks"));

    if (t.real.shape() != t.composite.shape() || t.mask.dim(1) != t.composite.dim(1) ||
        t.mask.dim(2) != t.composite.dim(2))
        throw DatasetError("dataset: id '" + id + "' has mismatched image/mask sizes");

    if (resolution != 0) {
        t.composite = resize_bilinear(t.composite, resolution, resolution);
        t.real = resize_bilinear(t.real, resolution, resolution);
        t.mask = resize_bilinear(t.mask, resolution, resolution);
    }
    t.mask = binarize(t.mask);

    std::size_t fg = 0;
    const std::size_t hw = t.mask.numel();
    for (std::size_t i = 0; i < hw; ++i) fg += t.mask[i] != 0.0f;
    if (fg == 0) throw DatasetError("dataset: id '" + id + "' has an empty mask");
    if (fg == hw) throw DatasetError("dataset: id '" + id + "' has no background pixels");

    double bg_diff = 0.0;
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t p = 0; p < hw; ++p)
            if (t.mask[p] == 0.0f)
                bg_diff += std::abs(static_cast<double>(t.composite[c * hw + p]) -
                                    static_cast<double>(t.real[c * hw + p]));
    bg_diff /= static_cast<double>((hw - fg) * 3);
    if (bg_diff >= 0.02 && warnings)
        warnings->push_back("dataset: id '" + id + "' background differs between composite and real (mean abs diff " +
                            std::to_string(bg_diff) + ")");
    return t;
}

/// Eagerly loads a whole split in sorted-id order.
inline std::vector<ImageTriplet> load_dataset(const std::string& root, const std::string& split,
                                              std::size_t resolution,
                                              std::vector<std::string>* warnings = nullptr) {
    std::vector<ImageTriplet> out;
    for (const std::string& id : detail::read_split_ids(root, split))
        out.push_back(load_triplet(root, id, resolution, warnings));
    return out;
}

// Ordered prefetching stream over a split: a producer thread decodes ahead
// into a bounded queue; items arrive in sorted-id order exactly once, and any
// producer-side error is rethrown from next() at the item where it occurred.
class TripletStream {
  public:
    TripletStream(std::string root, const std::string& split, std::size_t resolution,
                  std::size_t queue_capacity = 4)
        : ids_(detail::read_split_ids(root, split)) {
        producer_ = std::thread([this, root = std::move(root), resolution, queue_capacity] {
            for (const std::string& id : ids_) {
                std::optional<ImageTriplet> item;
                std::exception_ptr error;
                std::vector<std::string> local_warnings;
                try {
                    item = load_triplet(root, id, resolution, &local_warnings);
                } catch (...) {
                    error = std::current_exception();
                }
                std::unique_lock lock(mu_);
                for (auto& w : local_warnings) warnings_.push_back(std::move(w));
                not_full_.wait(lock, [&] { return queue_.size() < queue_capacity || closed_; });
                if (closed_) return;
                queue_.push_back({std::move(item), error});
                not_empty_.notify_one();
                if (error) return;
            }
            std::unique_lock lock(mu_);
            done_ = true;
            not_empty_.notify_one();
        });
    }

    ~TripletStream() {
        {
            std::lock_guard lock(mu_);
            closed_ = true;
            not_full_.notify_all();
        }
        if (producer_.joinable()) producer_.join();
    }

    TripletStream(const TripletStream&) = delete;
    TripletStream& operator=(const TripletStream&) = delete;

    std::size_t size() const { return ids_.size(); }

    /// Next triplet in order, or nullopt at end of stream.
    std::optional<ImageTriplet> next() {
        std::unique_lock lock(mu_);
        not_empty_.wait(lock, [&] { return !queue_.empty() || done_; });
        if (queue_.empty()) return std::nullopt;
        Slot slot = std::move(queue_.front());
        queue_.pop_front();
        not_full_.notify_one();
        if (slot.error) {
            done_ = true;
            std::rethrow_exception(slot.error);
        }
        return std::move(slot.item);
    }

    /// Warnings recorded by the producer so far (stable after exhaustion).
    std::vector<std::string> warnings() {
        std::lock_guard lock(mu_);
        return warnings_;
    }

  private:
    struct Slot {
        std::optional<ImageTriplet> item;
        std::exception_ptr error;
    };

    std::vector<std::string> ids_;
    std::deque<Slot> queue_;
    std::vector<std::string> warnings_;
    std::mutex mu_;
    std::condition_variable not_empty_, not_full_;
    bool done_ = false, closed_ = false;
    std::thread producer_;
};

}  // namespace harmonize
