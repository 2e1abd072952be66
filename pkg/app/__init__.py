# Jamming Run-and-Tumble Toolkit
