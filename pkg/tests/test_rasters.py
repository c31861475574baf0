import numpy as np
import pytest

from mveval.core_model import Dataset
from mveval.errors import UnreadableImage, UnsupportedFormat
from mveval.rasters import crop_black_margin, load_rasters, margin_bounds, preprocess, read_image, \
    read_raster, write_dataset_rasters, write_raster
from tests.create_dummy_data.dummy_lesions import create_bordered_image, create_dummy_dataset, \
    create_dummy_rasters, create_dummy_record, save_image


def test_crop_black_border():
    cropped = crop_black_margin(create_bordered_image(400, 50))
    assert cropped.shape == (300, 300, 3)
    assert (cropped == 180).all()


def test_dark_image_is_not_cropped():
    pixels = np.zeros((20, 30, 3), dtype=np.uint8)
    assert margin_bounds(pixels) == (0, 20, 0, 30)


def test_bright_edge_pixel_stops_crop():
    pixels = create_bordered_image(40, 10)
    pixels[0, 0] = [200, 0, 0]
    assert margin_bounds(pixels) == (0, 30, 0, 30)


def test_preprocess_resizes_and_scales():
    raster = preprocess(create_bordered_image(400, 50, value=255), size=32)
    assert raster.shape == (32, 32, 3)
    np.testing.assert_allclose(raster, 1.0)


def test_read_png_and_jpeg(tmp_path):
    pixels = create_bordered_image(64, 8)
    png = read_image(save_image(pixels, tmp_path / 'a.png'))
    assert np.array_equal(png, pixels)
    jpeg = read_raster(save_image(pixels, tmp_path / 'a.jpg', 'JPEG'), size=16)
    assert jpeg.shape == (16, 16, 3)


def test_unreadable_and_unsupported(tmp_path):
    junk = tmp_path / 'junk.png'
    junk.write_bytes(b'not an image')
    with pytest.raises(UnreadableImage):
        read_image(str(junk))
    with pytest.raises(UnreadableImage):
        read_image(str(tmp_path / 'missing.png'))
    gif = save_image(create_bordered_image(16, 2), tmp_path / 'a.gif', 'GIF')
    with pytest.raises(UnsupportedFormat):
        read_image(gif)


def test_write_raster_is_8_bit(tmp_path):
    raster = np.full((3, 3, 3), 0.5)
    path = write_raster(raster, str(tmp_path / 'nested' / 'r.png'))
    assert np.array_equal(read_image(path), np.full((3, 3, 3), 128, dtype=np.uint8))


def test_write_then_load_dataset_rasters(tmp_path):
    dataset = Dataset(tuple(create_dummy_record(f'L{i}', 3, source='img/{lesion_id}_{index}.png')
                            for i in range(2)))
    rasters = {key: np.clip(r, 0.1, 1.0) for key, r in create_dummy_rasters(dataset, size=8).items()}
    written = write_dataset_rasters(dataset, str(tmp_path), rasters)
    assert len(written) == 6

    serial = load_rasters(dataset, str(tmp_path), size=8, workers=1)
    parallel = load_rasters(dataset, str(tmp_path), size=8, workers=3)
    assert len(serial.rasters) == 6
    for key, raster in serial.rasters.items():
        assert np.array_equal(raster, parallel.rasters[key])
        np.testing.assert_allclose(raster, rasters[key], atol=0.5 / 255 + 1e-12)


def test_score_keys_are_skipped():
    dataset = create_dummy_dataset(2, 3)
    assert load_rasters(dataset) is dataset
