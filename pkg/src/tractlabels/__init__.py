from src.tractlabels.streamlines import Streamline, StreamlineBundle, read_streamlines, write_streamlines
from src.tractlabels.voxelize import traverse_segment, voxelize_streamlines
from src.tractlabels.islands import remove_islands
from src.tractlabels.labels import streamlines_to_label_volume, transfer_labels
