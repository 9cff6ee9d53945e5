from src.phantom.generator import (
    build_tubes,
    coarse_agreement,
    degrade_to_coarse,
    flip_boundary,
    generate_phantom,
    phantom_streamlines,
)
from src.phantom.dataset import Manifest, generate_dataset, read_manifest
