#include "aal/commands.hpp"

#include <numeric>

#include "aal/checkpoint.hpp"
#include "aal/train.hpp"

#include "io_util.hpp"

namespace aal {

SelectLinksResult select_links(const std::string& checkpoint, double theta, const std::string& out) {
  const LinkSnapshot snap = snapshot_from_checkpoint(load_checkpoint(checkpoint));
  SelectLinksResult r;
  r.mask = prune_links(normalize_links(snap), theta);
  r.channels = snap.channels();
  r.maps = snap.maps();
  r.kept = kept_fraction(r.mask);
  r.envelope = block_envelope(r.mask, snap.block_widths, snap.heads, snap.layers);
  write_raw_mask(out + ".mask", r.mask, r.channels, r.maps);
  write_mask_spec(out + ".json", r.envelope);
  return r;
}

Heatmap export_heatmap(const std::string& checkpoint, const std::string& out) {
  const Heatmap heat = block_heatmap(snapshot_from_checkpoint(load_checkpoint(checkpoint)));
  detail::write_file(out + ".csv", heatmap_csv(heat));
  detail::write_file(out + ".pgm", heatmap_pgm(heat));
  return heat;
}

template <typename T>
Tensor<double> student_attention_maps(const Student<T>& student, const Dataset& data, std::size_t batch) {
  const StudentConfig& sc = student.config();
  const std::size_t grid = static_cast<std::size_t>(sc.grid()), maps = static_cast<std::size_t>(sc.maps());
  Tensor<double> out({data.size(), maps, grid, grid});
  NoGradScope<T> no_grad;
  for (std::size_t start = 0; start < data.size(); start += batch) {
    std::vector<std::size_t> idx(std::min(batch, data.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    Tensor<T> x = data.batch<T>(idx);
    normalize_cifar(x);
    const Tensor<T> a = student.forward(x).attn.maps;
    std::copy(a.data().begin(), a.data().end(), out.ptr() + start * maps * grid * grid);
  }
  return out;
}

WsolReport wsol_from_checkpoint(const std::string& checkpoint, const Dataset& data, std::span<const double> deltas) {
  if (!data.has_boxes()) throw InputError("wsol needs a dataset with boxes");
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  const CheckpointMeta meta = read_meta(ckpt);
  const Tensor<double> maps = meta.config.precision == "f64"
                                  ? student_attention_maps(load_student<double>(ckpt), data)
                                  : student_attention_maps(load_student<float>(ckpt), data);
  return evaluate_wsol(localization_maps(maps, kCifarSide), kCifarSide, data.boxes, deltas);
}

Dataset gen_data(std::uint64_t seed, std::size_t n, int classes, const std::string& images_path,
                 const std::string& boxes_path) {
  Dataset d = gen_shapes(seed, n, classes);
  write_cifar10_batch(images_path, d);
  write_boxes(boxes_path, d.boxes);
  return d;
}

template Tensor<double> student_attention_maps<float>(const Student<float>&, const Dataset&, std::size_t);
template Tensor<double> student_attention_maps<double>(const Student<double>&, const Dataset&, std::size_t);

}  // namespace aal
