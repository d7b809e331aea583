# problems package