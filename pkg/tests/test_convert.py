import numpy as np
import pytest
from PIL import Image

from cmsf.convert import convert_tree
from cmsf.dataset import load_dataset
from cmsf.errors import DatasetError


def build_upstream(root, video="clipA"):
    """A foreign layout: JPEG frames numbered 00001.., flat mask dir."""
    for t in range(1, 6):
        img_dir = root / video / "imgs"
        img_dir.mkdir(parents=True, exist_ok=True)
        Image.fromarray(np.full((10, 10, 3), 90, np.uint8)).save(
            img_dir / f"{t:05d}.jpg"
        )
        (root / video / "wav").mkdir(parents=True, exist_ok=True)
        (root / video / "wav" / f"{t}.wav").write_bytes(b"RIFF")
        mask_dir = root / "masks" / video
        mask_dir.mkdir(parents=True, exist_ok=True)
        Image.fromarray(np.full((10, 10), 255, np.uint8)).save(
            mask_dir / f"{t:05d}.png"
        )


class TestConvertTree:
    def test_converts_to_canonical_layout(self, tmp_path):
        src = tmp_path / "upstream"
        build_upstream(src)
        converted = convert_tree(
            src,
            tmp_path / "canonical",
            "S4",
            frame_pattern="{video}/imgs/{t:05d}.jpg",
            audio_pattern="{video}/wav/{t}.wav",
            gt_pattern="masks/{video}/{t:05d}.png",
            videos=["clipA"],
        )
        assert converted == ["clipA"]
        index = load_dataset(tmp_path / "canonical", "S4")
        assert [v.video_id for v in index.videos] == ["clipA"]

    def test_missing_source_file_named(self, tmp_path):
        src = tmp_path / "upstream"
        build_upstream(src)
        (src / "clipA" / "imgs" / "00002.jpg").unlink()
        with pytest.raises(DatasetError, match="00002"):
            convert_tree(
                src,
                tmp_path / "broken",
                "S4",
                frame_pattern="{video}/imgs/{t:05d}.jpg",
                audio_pattern="{video}/wav/{t}.wav",
                videos=["clipA"],
            )

    def test_non_wav_audio_rejected(self, tmp_path):
        src = tmp_path / "upstream"
        build_upstream(src)
        (src / "clipA" / "wav" / "1.mp3").write_bytes(b"x")
        with pytest.raises(DatasetError, match="WAV"):
            convert_tree(
                src,
                tmp_path / "out",
                "S4",
                frame_pattern="{video}/imgs/{t:05d}.jpg",
                audio_pattern="{video}/wav/{t}.mp3",
                videos=["clipA"],
            )
