#include "ifstab/idx.hpp"

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

namespace ifstab {

namespace {

constexpr std::uint32_t kImagesMagic = 0x00000803;
constexpr std::uint32_t kLabelsMagic = 0x00000801;

std::vector<unsigned char> read_all(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(path + ": cannot open");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<unsigned char>& buf, std::size_t offset,
                   const std::string& path) {
    if (offset + 4 > buf.size())
        throw FormatError(path + ": truncated at offset " +
                          std::to_string(offset) + ", need 4 header bytes");
    return (std::uint32_t(buf[offset]) << 24) |
           (std::uint32_t(buf[offset + 1]) << 16) |
           (std::uint32_t(buf[offset + 2]) << 8) | std::uint32_t(buf[offset + 3]);
}

std::string hex(std::uint32_t v) {
    char b[16];
    std::snprintf(b, sizeof(b), "0x%08x", v);
    return b;
}

}  // namespace

DomainSample load_idx(const std::string& images_path,
                      const std::string& labels_path, int binarize_threshold) {
    const auto img = read_all(images_path);
    const auto lab = read_all(labels_path);

    const std::uint32_t img_magic = be32(img, 0, images_path);
    if (img_magic != kImagesMagic)
        throw FormatError(images_path + ": bad magic " + hex(img_magic) +
                          " at offset 0, expected " + hex(kImagesMagic));
    const std::uint32_t lab_magic = be32(lab, 0, labels_path);
    if (lab_magic != kLabelsMagic)
        throw FormatError(labels_path + ": bad magic " + hex(lab_magic) +
                          " at offset 0, expected " + hex(kLabelsMagic));

    const std::uint32_t n_img = be32(img, 4, images_path);
    const std::uint32_t rows = be32(img, 8, images_path);
    const std::uint32_t cols = be32(img, 12, images_path);
    const std::uint32_t n_lab = be32(lab, 4, labels_path);
    if (n_img != n_lab)
        throw FormatError(images_path + " holds " + std::to_string(n_img) +
                          " items but " + labels_path + " holds " +
                          std::to_string(n_lab));

    const std::size_t pixels = std::size_t(n_img) * rows * cols;
    if (img.size() < 16 + pixels)
        throw FormatError(images_path + ": truncated at offset " +
                          std::to_string(img.size()) + ", expected " +
                          std::to_string(16 + pixels) + " bytes");
    if (lab.size() < 8 + n_lab)
        throw FormatError(labels_path + ": truncated at offset " +
                          std::to_string(lab.size()) + ", expected " +
                          std::to_string(8 + std::size_t(n_lab)) + " bytes");

    DomainSample d;
    d.domain_id = std::filesystem::path(images_path).filename().string();
    d.features.resize(n_img, Index(rows) * cols);
    d.targets.resize(n_img, 1);
    for (std::uint32_t i = 0; i < n_img; ++i) {
        const std::size_t base = 16 + std::size_t(i) * rows * cols;
        for (std::uint32_t p = 0; p < rows * cols; ++p)
            d.features(i, p) = img[base + p] / 255.0;
        d.targets(i, 0) = lab[8 + i] <= binarize_threshold ? 1.0 : 0.0;
    }
    return d;
}

}  // namespace ifstab
